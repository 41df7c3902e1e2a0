#pragma once

#include <optional>
#include <string>
#include <vector>

namespace geo {

// One image record. Paths are stored as written in the manifest and
// resolved against the manifest's directory when loaded.
struct ManifestEntry {
    std::string id;
    std::string image_path;
    int label = 0; // 1 = real, 0 = generated
    std::optional<double> prequalifier_score; // in [0,1] when present
    // object/shadow mask path pairs, possibly empty
    std::vector<std::pair<std::string, std::string>> mask_pairs;
};

// Manifest text format, one record per line:
//   id=img0001 image=images/img0001.pgm label=real score=0.87 \
//   mask_pair=masks/a_obj.pgm:masks/a_sh.pgm mask_pair=...
// Blank lines and lines starting with '#' are skipped. Unknown keys,
// duplicate ids, missing id/image/label, or a score outside [0,1] raise
// geo::error naming the line number.
std::vector<ManifestEntry> load_manifest(const std::string& path);
void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries);

// Directory part of a path ("" if none), used to resolve manifest-relative
// image and mask paths.
std::string parent_dir(const std::string& path);
std::string join_path(const std::string& dir, const std::string& rel);

} // namespace geo
