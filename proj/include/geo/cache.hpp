#pragma once

#include <string>
#include <vector>

namespace geo {

// Per-image feature table. Column order is fixed by the writer; readers
// get back exactly what was written (values print with 17 significant
// digits, so doubles survive the round trip bit-exactly).
struct FeatureCache {
    int schema_version = 1;
    std::vector<std::string> columns; // feature names, excluding the id column
    std::vector<std::string> ids;
    std::vector<std::vector<double>> rows; // rows[i].size() == columns.size()
};

// CSV with a "# geoforensics-cache schema N" comment line, then a header
// row ("id,<col>,..."), then one row per image. Errors name the path and
// line: column-count mismatch, unknown schema version, missing header.
void write_cache(const std::string& path, const FeatureCache& cache);
FeatureCache read_cache(const std::string& path);

} // namespace geo
