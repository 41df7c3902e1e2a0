#include "geo/cache.hpp"
#include "geo/common.hpp"
#include "geo/image.hpp"
#include "geo/manifest.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

namespace geo {

std::string format_double(double v) {
    // Try increasing precision until the text parses back to the same bits.
    char buf[40];
    for (int prec = 1; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
        if (std::strtod(buf, nullptr) == v)
            return buf;
    }
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::size_t BinaryMask::count() const {
    std::size_t n = 0;
    for (auto b : bits)
        n += (b != 0);
    return n;
}

// ---- PGM ----

namespace {

// Reads one whitespace-delimited token, skipping '#' comment lines.
int read_pnm_int(std::istream& in, const std::string& path, const char* what) {
    int c;
    while ((c = in.get()) != EOF) {
        if (c == '#') {
            while ((c = in.get()) != EOF && c != '\n') {}
        } else if (!std::isspace(c)) {
            break;
        }
    }
    if (c == EOF)
        throw error(path + ": truncated header, expected " + what);
    std::string tok;
    while (c != EOF && !std::isspace(c)) {
        tok.push_back(static_cast<char>(c));
        c = in.get();
    }
    try {
        std::size_t pos = 0;
        int v = std::stoi(tok, &pos);
        if (pos != tok.size())
            throw std::invalid_argument(tok);
        return v;
    } catch (const std::exception&) {
        throw error(path + ": bad " + std::string(what) + " '" + tok + "'");
    }
}

std::vector<std::uint8_t> load_pgm_bytes(const std::string& path, int& w, int& h) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw error(path + ": cannot open");
    char m0 = 0, m1 = 0;
    in.get(m0);
    in.get(m1);
    if (m0 != 'P' || m1 != '5')
        throw error(path + ": not a binary PGM (P5)");
    w = read_pnm_int(in, path, "width");
    h = read_pnm_int(in, path, "height");
    int maxval = read_pnm_int(in, path, "maxval");
    if (w <= 0 || h <= 0)
        throw error(path + ": zero or negative dimensions");
    if (maxval != 255)
        throw error(path + ": unsupported maxval " + std::to_string(maxval));
    // header ends with exactly one whitespace byte, already consumed by the
    // token reader's trailing isspace
    std::vector<std::uint8_t> bytes(static_cast<std::size_t>(w) * h);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (static_cast<std::size_t>(in.gcount()) != bytes.size())
        throw error(path + ": truncated pixel data");
    return bytes;
}

void write_pgm_bytes(const std::string& path, int w, int h, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw error(path + ": cannot open for writing");
    out << "P5\n" << w << " " << h << "\n255\n";
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out)
        throw error(path + ": write failed");
}

} // namespace

GrayImage load_gray(const std::string& path) {
    int w = 0, h = 0;
    auto bytes = load_pgm_bytes(path, w, h);
    GrayImage img(w, h);
    for (std::size_t i = 0; i < bytes.size(); ++i)
        img.pixels[i] = bytes[i] / 255.0;
    return img;
}

void write_gray(const std::string& path, const GrayImage& img) {
    std::vector<std::uint8_t> bytes(img.pixels.size());
    for (std::size_t i = 0; i < bytes.size(); ++i) {
        double v = std::clamp(img.pixels[i], 0.0, 1.0);
        bytes[i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
    }
    write_pgm_bytes(path, img.width, img.height, bytes);
}

BinaryMask load_mask(const std::string& path) {
    int w = 0, h = 0;
    auto bytes = load_pgm_bytes(path, w, h);
    BinaryMask mask(w, h);
    for (std::size_t i = 0; i < bytes.size(); ++i)
        mask.bits[i] = bytes[i] ? 1 : 0;
    return mask;
}

void write_mask(const std::string& path, const BinaryMask& mask) {
    std::vector<std::uint8_t> bytes(mask.bits.size());
    for (std::size_t i = 0; i < bytes.size(); ++i)
        bytes[i] = mask.bits[i] ? 255 : 0;
    write_pgm_bytes(path, mask.width, mask.height, bytes);
}

// ---- manifest ----

std::string parent_dir(const std::string& path) {
    auto pos = path.find_last_of('/');
    return pos == std::string::npos ? std::string() : path.substr(0, pos);
}

std::string join_path(const std::string& dir, const std::string& rel) {
    if (dir.empty() || (!rel.empty() && rel.front() == '/'))
        return rel;
    return dir + "/" + rel;
}

std::vector<ManifestEntry> load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw error(path + ": cannot open");
    std::vector<ManifestEntry> entries;
    std::set<std::string> seen;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#')
            continue;
        auto fail = [&](const std::string& msg) {
            throw error(path + ":" + std::to_string(lineno) + ": " + msg);
        };
        ManifestEntry e;
        bool have_label = false;
        std::istringstream fields(line);
        std::string field;
        while (fields >> field) {
            auto eq = field.find('=');
            if (eq == std::string::npos)
                fail("field without '=': " + field);
            std::string key = field.substr(0, eq);
            std::string val = field.substr(eq + 1);
            if (key == "id") {
                e.id = val;
            } else if (key == "image") {
                e.image_path = val;
            } else if (key == "label") {
                if (val == "real")
                    e.label = 1;
                else if (val == "generated")
                    e.label = 0;
                else
                    fail("label must be real or generated, got '" + val + "'");
                have_label = true;
            } else if (key == "score") {
                char* end = nullptr;
                double s = std::strtod(val.c_str(), &end);
                if (end != val.c_str() + val.size() || val.empty())
                    fail("bad score '" + val + "'");
                if (!(s >= 0.0 && s <= 1.0))
                    fail("score outside [0,1]: " + val);
                e.prequalifier_score = s;
            } else if (key == "mask_pair") {
                auto colon = val.find(':');
                if (colon == std::string::npos)
                    fail("mask_pair needs object:shadow paths");
                e.mask_pairs.emplace_back(val.substr(0, colon), val.substr(colon + 1));
            } else {
                fail("unknown key '" + key + "'");
            }
        }
        if (e.id.empty())
            fail("missing id");
        if (e.image_path.empty())
            fail("missing image");
        if (!have_label)
            fail("missing label");
        if (!seen.insert(e.id).second)
            fail("duplicate id '" + e.id + "'");
        entries.push_back(std::move(e));
    }
    return entries;
}

void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries) {
    std::ofstream out(path);
    if (!out)
        throw error(path + ": cannot open for writing");
    for (const auto& e : entries) {
        out << "id=" << e.id << " image=" << e.image_path
            << " label=" << (e.label ? "real" : "generated");
        if (e.prequalifier_score)
            out << " score=" << format_double(*e.prequalifier_score);
        for (const auto& [obj, sh] : e.mask_pairs)
            out << " mask_pair=" << obj << ":" << sh;
        out << "\n";
    }
    if (!out)
        throw error(path + ": write failed");
}

// ---- feature cache ----

void write_cache(const std::string& path, const FeatureCache& cache) {
    if (cache.ids.size() != cache.rows.size())
        throw error(path + ": cache ids/rows size mismatch");
    std::ofstream out(path);
    if (!out)
        throw error(path + ": cannot open for writing");
    out << "# geoforensics-cache schema " << cache.schema_version << "\n";
    out << "id";
    for (const auto& c : cache.columns)
        out << "," << c;
    out << "\n";
    for (std::size_t i = 0; i < cache.rows.size(); ++i) {
        if (cache.rows[i].size() != cache.columns.size())
            throw error(path + ": row " + std::to_string(i) + " has " +
                        std::to_string(cache.rows[i].size()) + " values, expected " +
                        std::to_string(cache.columns.size()));
        out << cache.ids[i];
        for (double v : cache.rows[i])
            out << "," << format_double(v);
        out << "\n";
    }
    if (!out)
        throw error(path + ": write failed");
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    for (char c : line) {
        if (c == ',') {
            cells.push_back(cell);
            cell.clear();
        } else {
            cell.push_back(c);
        }
    }
    cells.push_back(cell);
    return cells;
}

} // namespace

FeatureCache read_cache(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw error(path + ": cannot open");
    FeatureCache cache;
    std::string line;
    if (!std::getline(in, line))
        throw error(path + ": empty cache file");
    int lineno = 1;
    const std::string tag = "# geoforensics-cache schema ";
    if (line.rfind(tag, 0) == 0) {
        int v = std::atoi(line.c_str() + tag.size());
        if (v != 1)
            throw error(path + ": unknown schema version " + std::to_string(v));
        cache.schema_version = v;
        if (!std::getline(in, line))
            throw error(path + ": missing header row");
        ++lineno;
    }
    auto header = split_csv(line);
    if (header.empty() || header[0] != "id")
        throw error(path + ": header must start with id column");
    cache.columns.assign(header.begin() + 1, header.end());
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty())
            continue;
        auto cells = split_csv(line);
        if (cells.size() != header.size())
            throw error(path + ":" + std::to_string(lineno) + ": expected " +
                        std::to_string(header.size()) + " columns, got " +
                        std::to_string(cells.size()));
        cache.ids.push_back(cells[0]);
        std::vector<double> row(cells.size() - 1);
        for (std::size_t j = 1; j < cells.size(); ++j) {
            char* end = nullptr;
            row[j - 1] = std::strtod(cells[j].c_str(), &end);
            if (cells[j].empty() || end != cells[j].c_str() + cells[j].size())
                throw error(path + ":" + std::to_string(lineno) + ": bad number '" + cells[j] + "'");
        }
        cache.rows.push_back(std::move(row));
    }
    return cache;
}

} // namespace geo
