#include "CLI11.hpp"

#include "geo/cache.hpp"
#include "geo/common.hpp"
#include "geo/cues.hpp"
#include "geo/eval.hpp"
#include "geo/learn.hpp"
#include "geo/manifest.hpp"
#include "geo/parallel.hpp"
#include "geo/synth.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>

namespace {

using geo::error;

// flag misuse discovered after parsing (exit 1, like CLI11 parse errors)
struct usage_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string g_argv_line;

std::string file_digest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw error(path + ": cannot open");
    std::ostringstream ss;
    ss << in.rdbuf();
    std::string bytes = ss.str();
    char buf[24];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(geo::fnv1a64(bytes.data(), bytes.size())));
    return buf;
}

// Audit trail written beside every primary output. The timestamp is the
// only line that varies between identical runs.
void write_provenance(const std::string& path, const std::string& subcommand,
                      std::optional<std::uint64_t> seed,
                      const std::vector<std::string>& inputs) {
    std::ofstream out(path);
    if (!out)
        throw error(path + ": cannot open for writing");
    out << "geoforensics provenance\n";
    out << "subcommand " << subcommand << "\n";
    out << "argv " << g_argv_line << "\n";
    if (seed)
        out << "seed " << *seed << "\n";
    for (const auto& in_path : inputs)
        out << "input " << in_path << " fnv1a64 " << file_digest(in_path) << "\n";
    std::time_t now = std::time(nullptr);
    char buf[40];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    out << "written " << buf << "\n";
}

std::uint64_t default_seed() {
    const char* env = std::getenv("GEOFORENSICS_SEED");
    if (!env || !*env)
        return 42;
    char* end = nullptr;
    unsigned long long v = std::strtoull(env, &end, 10);
    if (!end || *end != '\0')
        throw usage_error(std::string("GEOFORENSICS_SEED is not an integer: ") + env);
    return v;
}

int resolve_jobs(int jobs) { return jobs <= 0 ? geo::hardware_jobs() : jobs; }

void write_scores_csv(const std::string& path, const std::vector<std::string>& ids,
                      const std::vector<double>& scores) {
    std::ofstream out(path);
    if (!out)
        throw error(path + ": cannot open for writing");
    out << "id,score\n";
    for (std::size_t i = 0; i < ids.size(); ++i)
        out << ids[i] << "," << geo::format_double(scores[i]) << "\n";
    if (!out)
        throw error(path + ": write failed");
}

std::map<std::string, double> read_scores_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw error(path + ": cannot open");
    std::string line;
    if (!std::getline(in, line) || line != "id,score")
        throw error(path + ": expected header 'id,score'");
    std::map<std::string, double> out;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty())
            continue;
        auto comma = line.find(',');
        if (comma == std::string::npos)
            throw error(path + ":" + std::to_string(lineno) + ": missing comma");
        std::string id = line.substr(0, comma);
        char* end = nullptr;
        double v = std::strtod(line.c_str() + comma + 1, &end);
        if (!end || *end != '\0')
            throw error(path + ":" + std::to_string(lineno) + ": bad score");
        if (!out.emplace(id, v).second)
            throw error(path + ":" + std::to_string(lineno) + ": duplicate id " + id);
    }
    return out;
}

struct LoadedEntry {
    geo::GrayImage image;
    std::vector<std::pair<geo::BinaryMask, geo::BinaryMask>> masks;
};

LoadedEntry load_entry(const std::string& base, const geo::ManifestEntry& e, bool need_masks) {
    LoadedEntry out;
    out.image = geo::load_gray(geo::join_path(base, e.image_path));
    if (need_masks)
        for (const auto& [obj, sh] : e.mask_pairs)
            out.masks.emplace_back(geo::load_mask(geo::join_path(base, obj)),
                                   geo::load_mask(geo::join_path(base, sh)));
    return out;
}

// ---- synth ----

struct SynthConfig {
    geo::synth::CorpusParams params;
    int jobs = 1;
};

void run_synth(const SynthConfig& cfg) {
    geo::synth::CorpusParams params = cfg.params;
    params.jobs = resolve_jobs(cfg.jobs);
    auto entries = geo::synth::make_corpus(params);
    write_provenance(params.out_dir + "/provenance.txt", "synth", params.seed, {});
    std::cout << "wrote " << entries.size() << " images to " << params.out_dir << "\n";
}

// ---- extract ----

struct ExtractConfig {
    std::string manifest;
    std::string out = "features.csv";
    std::string cue = "all";
    int jobs = 1;
    int grid_w = 8, grid_h = 8;
    double half_width_deg = 25.0;
    std::string dump_segments, dump_vps, dump_field, dump_shadows;
};

void run_extract(const ExtractConfig& cfg) {
    auto entries = geo::load_manifest(cfg.manifest);
    std::string base = geo::parent_dir(cfg.manifest);

    geo::cues::ExtractOptions opt;
    opt.lines = cfg.cue == "all" || cfg.cue == "lines";
    opt.fields = cfg.cue == "all" || cfg.cue == "field";
    opt.shadows = cfg.cue == "all" || cfg.cue == "shadows";
    opt.grid_w = cfg.grid_w;
    opt.grid_h = cfg.grid_h;
    opt.shadow_half_width_deg = cfg.half_width_deg;

    for (const std::string& dir : {cfg.dump_segments, cfg.dump_vps, cfg.dump_field, cfg.dump_shadows})
        if (!dir.empty())
            std::filesystem::create_directories(dir);

    std::vector<geo::cues::ExtractResult> results(entries.size());
    std::atomic<bool> failed{false};
    std::mutex err_mutex;
    std::string err_msg;

    geo::parallel_for(entries.size(), resolve_jobs(cfg.jobs), [&](std::size_t i) {
        if (failed.load(std::memory_order_relaxed))
            return;
        try {
            LoadedEntry loaded = load_entry(base, entries[i], opt.shadows);
            results[i] = geo::cues::extract_one(loaded.image, loaded.masks, opt);
            const auto& res = results[i];
            const std::string& id = entries[i].id;
            if (!cfg.dump_segments.empty()) {
                std::ofstream out(cfg.dump_segments + "/" + id + ".txt");
                for (const auto& s : res.segments)
                    out << geo::format_double(s.x1) << " " << geo::format_double(s.y1) << " "
                        << geo::format_double(s.x2) << " " << geo::format_double(s.y2) << " "
                        << geo::format_double(s.width) << " " << geo::format_double(s.log_nfa)
                        << "\n";
            }
            if (!cfg.dump_vps.empty()) {
                std::ofstream out(cfg.dump_vps + "/" + id + ".txt");
                for (const auto& v : res.vps)
                    out << geo::format_double(v.p.x) << " " << geo::format_double(v.p.y) << " "
                        << geo::format_double(v.p.z) << " " << v.inlier_ids.size() << "\n";
            }
            if (!cfg.dump_field.empty()) {
                std::ofstream out(cfg.dump_field + "/" + id + ".txt");
                out << res.field.gw << " " << res.field.gh << "\n";
                for (const auto& c : res.field.cells)
                    out << geo::format_double(c.ux) << " " << geo::format_double(c.uy) << " "
                        << geo::format_double(c.latitude) << "\n";
            }
            if (!cfg.dump_shadows.empty()) {
                std::ofstream out(cfg.dump_shadows + "/" + id + ".txt");
                for (const auto& p : res.pairs)
                    out << geo::format_double(p.azimuth * 180.0 / M_PI) << " "
                        << geo::format_double(p.length_ratio) << "\n";
                out << (res.verdict.feasible ? 1 : 0) << " "
                    << geo::format_double(res.verdict.circ_variance) << " "
                    << geo::format_double(res.verdict.length_dispersion) << "\n";
            }
        } catch (const std::exception& ex) {
            std::lock_guard<std::mutex> lock(err_mutex);
            if (!failed.exchange(true))
                err_msg = ex.what();
        }
    });
    if (failed)
        throw error(err_msg);

    geo::FeatureCache cache;
    cache.columns = geo::cues::schema();
    for (std::size_t i = 0; i < entries.size(); ++i) {
        cache.ids.push_back(entries[i].id);
        cache.rows.push_back(results[i].features);
    }
    geo::write_cache(cfg.out, cache);
    write_provenance(cfg.out + ".provenance.txt", "extract", std::nullopt, {cfg.manifest});
    std::cout << "extracted " << entries.size() << " rows to " << cfg.out << "\n";
}

// ---- train ----

struct TrainConfig {
    std::string manifest;
    std::string learner;
    std::string out = "model.txt";
    std::string features;
    int epochs = 200;
    double lr = -1; // per-learner default
    double l2 = 1e-4;
    int batch = 32;
    int cap = 512;
    int hidden = 32;
    int grid_w = 8, grid_h = 8;
    bool no_class_balance = false;
    std::uint64_t seed = 42;
};

// cache rows looked up by manifest id
std::vector<std::vector<double>> align_cache(const geo::FeatureCache& cache,
                                             const std::vector<geo::ManifestEntry>& entries) {
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < cache.ids.size(); ++i)
        index.emplace(cache.ids[i], i);
    std::vector<std::vector<double>> X;
    X.reserve(entries.size());
    for (const auto& e : entries) {
        auto it = index.find(e.id);
        if (it == index.end())
            throw error(e.id + ": not in the feature cache");
        X.push_back(cache.rows[it->second]);
    }
    return X;
}

void run_train(const TrainConfig& cfg) {
    auto entries = geo::load_manifest(cfg.manifest);
    std::string base = geo::parent_dir(cfg.manifest);
    std::vector<int> labels(entries.size());
    for (std::size_t i = 0; i < entries.size(); ++i)
        labels[i] = entries[i].label;

    std::vector<std::string> inputs = {cfg.manifest};
    if (cfg.learner == "lr") {
        if (cfg.features.empty())
            throw usage_error("train --learner lr needs --features CACHE");
        geo::FeatureCache cache = geo::read_cache(cfg.features);
        auto X = align_cache(cache, entries);
        geo::learn::LogRegParams params;
        params.epochs = cfg.epochs;
        params.lr = cfg.lr < 0 ? 1e-2 : cfg.lr;
        params.l2 = cfg.l2;
        params.seed = cfg.seed;
        params.class_balance = !cfg.no_class_balance;
        auto model = geo::learn::train_logreg(X, labels, cache.columns, params);
        geo::learn::save_model(cfg.out, model);
        inputs.push_back(cfg.features);
    } else if (cfg.learner == "set") {
        geo::cues::ExtractOptions opt;
        opt.fields = opt.shadows = false;
        std::vector<geo::learn::SetExample> examples(entries.size());
        for (std::size_t i = 0; i < entries.size(); ++i) {
            LoadedEntry loaded = load_entry(base, entries[i], false);
            auto res = geo::cues::extract_one(loaded.image, {}, opt);
            if (res.segments.empty())
                throw error(entries[i].id + ": no segments detected, cannot train on it");
            examples[i] = {std::move(res.segments), labels[i],
                           static_cast<double>(loaded.image.width),
                           static_cast<double>(loaded.image.height)};
        }
        geo::learn::SetParams params;
        params.epochs = cfg.epochs;
        params.lr = cfg.lr < 0 ? 1e-3 : cfg.lr;
        params.l2 = cfg.l2;
        params.batch = cfg.batch;
        params.cap = cfg.cap;
        params.seed = cfg.seed;
        params.class_balance = !cfg.no_class_balance;
        params.head = cfg.hidden;
        auto model = geo::learn::train_set(examples, params);
        geo::learn::save_model(cfg.out, model);
    } else if (cfg.learner == "grid") {
        geo::cues::ExtractOptions opt;
        opt.shadows = false;
        opt.grid_w = cfg.grid_w;
        opt.grid_h = cfg.grid_h;
        std::vector<geo::learn::GridExample> examples(entries.size());
        for (std::size_t i = 0; i < entries.size(); ++i) {
            LoadedEntry loaded = load_entry(base, entries[i], false);
            auto res = geo::cues::extract_one(loaded.image, {}, opt);
            examples[i] = {std::move(res.field), labels[i]};
        }
        geo::learn::GridParams params;
        params.epochs = cfg.epochs;
        params.lr = cfg.lr < 0 ? 1e-3 : cfg.lr;
        params.l2 = cfg.l2;
        params.batch = cfg.batch;
        params.seed = cfg.seed;
        params.class_balance = !cfg.no_class_balance;
        params.hidden = cfg.hidden;
        auto model = geo::learn::train_grid(examples, params);
        geo::learn::save_model(cfg.out, model);
    } else {
        throw usage_error("unknown learner '" + cfg.learner + "' (expected lr, set, or grid)");
    }

    write_provenance(cfg.out + ".provenance.txt", "train", cfg.seed, inputs);
    std::cout << "trained " << cfg.learner << " model -> " << cfg.out << "\n";
}

// ---- predict ----

struct PredictConfig {
    std::string model;
    std::string manifest;
    std::string out = "scores.csv";
    std::string features;
    int cap = 512;
};

void run_predict(const PredictConfig& cfg) {
    auto entries = geo::load_manifest(cfg.manifest);
    std::string base = geo::parent_dir(cfg.manifest);
    std::vector<std::string> ids(entries.size());
    for (std::size_t i = 0; i < entries.size(); ++i)
        ids[i] = entries[i].id;

    std::vector<double> scores(entries.size(), 0.5);
    std::vector<std::string> inputs = {cfg.model, cfg.manifest};
    auto type = geo::learn::peek_model_type(cfg.model);
    if (type == geo::learn::ModelType::logreg) {
        if (cfg.features.empty())
            throw usage_error("predict with a logreg model needs --features CACHE");
        auto model = geo::learn::load_logreg(cfg.model);
        geo::FeatureCache cache = geo::read_cache(cfg.features);
        if (cache.columns != model.feature_names)
            throw error(cfg.features + ": cache columns do not match the model's features");
        auto X = align_cache(cache, entries);
        for (std::size_t i = 0; i < entries.size(); ++i)
            scores[i] = geo::learn::predict_logreg(model, X[i]);
        inputs.push_back(cfg.features);
    } else if (type == geo::learn::ModelType::setnet) {
        auto model = geo::learn::load_setnet(cfg.model);
        geo::cues::ExtractOptions opt;
        opt.fields = opt.shadows = false;
        for (std::size_t i = 0; i < entries.size(); ++i) {
            LoadedEntry loaded = load_entry(base, entries[i], false);
            auto res = geo::cues::extract_one(loaded.image, {}, opt);
            // no segments carries no evidence either way
            scores[i] = res.segments.empty()
                            ? 0.5
                            : geo::learn::forward_set(model, res.segments, loaded.image.width,
                                                      loaded.image.height, cfg.cap);
        }
    } else {
        auto model = geo::learn::load_gridnet(cfg.model);
        geo::cues::ExtractOptions opt;
        opt.shadows = false;
        opt.grid_w = model.gw;
        opt.grid_h = model.gh;
        for (std::size_t i = 0; i < entries.size(); ++i) {
            LoadedEntry loaded = load_entry(base, entries[i], false);
            auto res = geo::cues::extract_one(loaded.image, {}, opt);
            scores[i] = geo::learn::forward_grid(model, res.field);
        }
    }

    write_scores_csv(cfg.out, ids, scores);
    write_provenance(cfg.out + ".provenance.txt", "predict", std::nullopt, inputs);
    std::cout << "scored " << entries.size() << " images -> " << cfg.out << "\n";
}

// ---- split ----

struct SplitConfig {
    std::string manifest;
    std::string out = "splits.csv";
    double band = 0.1;
    bool nested = false;
};

void run_split(const SplitConfig& cfg) {
    auto entries = geo::load_manifest(cfg.manifest);
    auto categories = geo::eval::split(entries, cfg.band, cfg.nested);
    std::ofstream out(cfg.out);
    if (!out)
        throw error(cfg.out + ": cannot open for writing");
    out << "id,category\n";
    for (std::size_t i = 0; i < entries.size(); ++i)
        out << entries[i].id << "," << geo::eval::category_name(categories[i]) << "\n";
    out.close();

    std::size_t counts[4] = {};
    for (auto c : categories)
        counts[static_cast<int>(c)] += 1;
    std::cout << "easy " << counts[0] << ", unconfident " << counts[1] << ", misclassified "
              << counts[2] << ", unscored " << counts[3] << "\n";
    write_provenance(cfg.out + ".provenance.txt", "split", std::nullopt, {cfg.manifest});
}

// ---- eval ----

struct EvalConfig {
    std::string manifest;
    std::string out = "reports";
    std::vector<std::string> scores; // name=path
    double band = 0.1;
    bool nested = false;
    bool svg = false;
};

void run_eval(const EvalConfig& cfg) {
    geo::eval::ReportRequest req;
    req.entries = geo::load_manifest(cfg.manifest);
    req.band = cfg.band;
    req.nested_misclassified = cfg.nested;
    req.svg = cfg.svg;
    req.out_dir = cfg.out;

    std::vector<std::string> inputs = {cfg.manifest};
    if (cfg.scores.empty()) {
        // fall back to the manifest's own prequalifier scores
        std::vector<double> s(req.entries.size(), std::nan(""));
        for (std::size_t i = 0; i < req.entries.size(); ++i)
            if (req.entries[i].prequalifier_score)
                s[i] = *req.entries[i].prequalifier_score;
        req.cue_scores.emplace_back("prequalifier", std::move(s));
    } else {
        std::map<std::string, std::size_t> id_index;
        for (std::size_t i = 0; i < req.entries.size(); ++i)
            id_index.emplace(req.entries[i].id, i);
        for (const auto& spec_str : cfg.scores) {
            auto eq = spec_str.find('=');
            if (eq == std::string::npos || eq == 0 || eq + 1 == spec_str.size())
                throw usage_error("--scores wants NAME=PATH, got '" + spec_str + "'");
            std::string name = spec_str.substr(0, eq);
            std::string path = spec_str.substr(eq + 1);
            auto loaded = read_scores_csv(path);
            std::vector<double> s(req.entries.size(), std::nan(""));
            for (const auto& [id, v] : loaded) {
                auto it = id_index.find(id);
                if (it == id_index.end())
                    throw error(path + ": id " + id + " is not in the manifest");
                s[it->second] = v;
            }
            req.cue_scores.emplace_back(name, std::move(s));
            inputs.push_back(path);
        }
    }

    auto rows = geo::eval::report(req);
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-12s %-14s %8s %7s %7s\n", "cue", "category", "auc", "real",
                  "gen");
    std::cout << buf;
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%-12s %-14s %8.4f %7d %7d\n", r.cue.c_str(),
                      r.category.c_str(), r.auc, r.n_real, r.n_gen);
        std::cout << buf;
    }
    write_provenance(cfg.out + "/provenance.txt", "eval", std::nullopt, inputs);
}

// ---- saliency ----

struct SaliencyConfig {
    std::string model;
    std::string manifest;
    std::string id;
    std::string out = "saliency.txt";
    std::string features;
    int cap = 512;
};

void run_saliency(const SaliencyConfig& cfg) {
    auto entries = geo::load_manifest(cfg.manifest);
    std::string base = geo::parent_dir(cfg.manifest);
    const geo::ManifestEntry* entry = nullptr;
    for (const auto& e : entries)
        if (e.id == cfg.id)
            entry = &e;
    if (!entry)
        throw error(cfg.id + ": not in the manifest");

    std::ofstream out(cfg.out);
    if (!out)
        throw error(cfg.out + ": cannot open for writing");

    std::vector<std::string> inputs = {cfg.model, cfg.manifest};
    auto type = geo::learn::peek_model_type(cfg.model);
    if (type == geo::learn::ModelType::logreg) {
        auto model = geo::learn::load_logreg(cfg.model);
        auto s = geo::learn::saliency_logreg(model);
        for (std::size_t j = 0; j < s.size(); ++j)
            out << model.feature_names[j] << " " << geo::format_double(s[j]) << "\n";
    } else if (type == geo::learn::ModelType::setnet) {
        auto model = geo::learn::load_setnet(cfg.model);
        LoadedEntry loaded = load_entry(base, *entry, false);
        geo::cues::ExtractOptions opt;
        opt.fields = opt.shadows = false;
        auto res = geo::cues::extract_one(loaded.image, {}, opt);
        if (res.segments.empty())
            throw error(cfg.id + ": no segments detected");
        auto s = geo::learn::saliency_set(model, res.segments, loaded.image.width,
                                          loaded.image.height, cfg.cap);
        for (std::size_t k = 0; k < res.segments.size(); ++k) {
            const auto& seg = res.segments[k];
            out << geo::format_double(seg.x1) << " " << geo::format_double(seg.y1) << " "
                << geo::format_double(seg.x2) << " " << geo::format_double(seg.y2) << " "
                << geo::format_double(s[k]) << "\n";
        }
    } else {
        auto model = geo::learn::load_gridnet(cfg.model);
        LoadedEntry loaded = load_entry(base, *entry, false);
        geo::cues::ExtractOptions opt;
        opt.shadows = false;
        opt.grid_w = model.gw;
        opt.grid_h = model.gh;
        auto res = geo::cues::extract_one(loaded.image, {}, opt);
        auto s = geo::learn::saliency_grid(model, res.field);
        for (int cy = 0; cy < model.gh; ++cy)
            for (int cx = 0; cx < model.gw; ++cx)
                out << cx << " " << cy << " "
                    << geo::format_double(s[static_cast<std::size_t>(cy) * model.gw + cx]) << "\n";
    }
    if (!out)
        throw error(cfg.out + ": write failed");
    write_provenance(cfg.out + ".provenance.txt", "saliency", std::nullopt, inputs);
    std::cout << "wrote saliency for " << cfg.id << " -> " << cfg.out << "\n";
}

} // namespace

int main(int argc, char** argv) {
    std::ostringstream argv_line;
    for (int i = 0; i < argc; ++i)
        argv_line << (i ? " " : "") << argv[i];
    g_argv_line = argv_line.str();

    CLI::App app{"decide whether images are real or generated from projective geometry cues"};
    app.require_subcommand(1);

    std::uint64_t seed;
    try {
        seed = default_seed();
    } catch (const usage_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }

    SynthConfig synth_cfg;
    synth_cfg.params.seed = seed;
    auto* synth = app.add_subcommand("synth", "render a synthetic corpus with known geometry");
    synth->add_option("--out", synth_cfg.params.out_dir, "output corpus directory")->required();
    synth->add_option("--n-real", synth_cfg.params.n_real, "clean images")->default_val(8);
    synth->add_option("--n-gen", synth_cfg.params.n_gen, "perturbed images")->default_val(8);
    synth->add_option("--eps-vp", synth_cfg.params.eps_vp,
                      "line deflection for perturbed images, radians")
        ->default_val(0.15);
    synth->add_option("--eps-shadow", synth_cfg.params.eps_shadow,
                      "shadow azimuth jitter for perturbed images, radians")
        ->default_val(0.5235987755982988);
    synth->add_option("--width", synth_cfg.params.width, "image width")->default_val(320);
    synth->add_option("--height", synth_cfg.params.height, "image height")->default_val(240);
    synth->add_option("--seed", synth_cfg.params.seed, "corpus seed")->default_val(seed);
    synth->add_option("--jobs", synth_cfg.jobs, "worker threads (0 = all cores)")->default_val(1);
    synth->callback([&] { run_synth(synth_cfg); });

    ExtractConfig extract_cfg;
    auto* extract = app.add_subcommand("extract", "derive geometry cues into a feature cache");
    extract->add_option("--manifest", extract_cfg.manifest, "corpus manifest")->required();
    extract->add_option("--out", extract_cfg.out, "feature cache path")
        ->default_val("features.csv");
    extract->add_option("--cue", extract_cfg.cue, "cue family to compute")
        ->default_val("all")
        ->check(CLI::IsMember({"all", "lines", "field", "shadows"}));
    extract->add_option("--jobs", extract_cfg.jobs, "worker threads (0 = all cores)")
        ->default_val(1);
    extract->add_option("--grid-w", extract_cfg.grid_w, "perspective field grid width")
        ->default_val(8);
    extract->add_option("--grid-h", extract_cfg.grid_h, "perspective field grid height")
        ->default_val(8);
    extract->add_option("--half-width-deg", extract_cfg.half_width_deg,
                        "shadow feasibility wedge half width, degrees")
        ->default_val(25.0);
    extract->add_option("--dump-segments", extract_cfg.dump_segments,
                        "write per-image segment lists to this directory");
    extract->add_option("--dump-vps", extract_cfg.dump_vps,
                        "write per-image vanishing points to this directory");
    extract->add_option("--dump-field", extract_cfg.dump_field,
                        "write per-image perspective fields to this directory");
    extract->add_option("--dump-shadows", extract_cfg.dump_shadows,
                        "write per-image shadow pair reports to this directory");
    extract->callback([&] { run_extract(extract_cfg); });

    TrainConfig train_cfg;
    train_cfg.seed = seed;
    auto* train = app.add_subcommand("train", "fit a classifier on a corpus");
    train->add_option("--manifest", train_cfg.manifest, "corpus manifest")->required();
    train->add_option("--learner", train_cfg.learner, "classifier kind")
        ->required()
        ->check(CLI::IsMember({"lr", "set", "grid"}));
    train->add_option("--out", train_cfg.out, "model output path")->default_val("model.txt");
    train->add_option("--features", train_cfg.features, "feature cache (lr learner)");
    train->add_option("--epochs", train_cfg.epochs, "training epochs")->default_val(200);
    train->add_option("--lr", train_cfg.lr, "learning rate")
        ->default_str("0.01 for lr, 0.001 for set/grid");
    train->add_option("--l2", train_cfg.l2, "l2 penalty on weights")->default_val(1e-4);
    train->add_option("--batch", train_cfg.batch, "minibatch size (set/grid)")->default_val(32);
    train->add_option("--cap", train_cfg.cap, "keep this many longest segments (set)")
        ->default_val(512);
    train->add_option("--hidden", train_cfg.hidden, "hidden width (grid, set head)")
        ->default_val(32);
    train->add_option("--grid-w", train_cfg.grid_w, "field grid width (grid)")->default_val(8);
    train->add_option("--grid-h", train_cfg.grid_h, "field grid height (grid)")->default_val(8);
    train->add_flag("--no-class-balance", train_cfg.no_class_balance,
                    "disable per-class example weighting");
    train->add_option("--seed", train_cfg.seed, "training seed")->default_val(seed);
    train->callback([&] { run_train(train_cfg); });

    PredictConfig predict_cfg;
    auto* predict = app.add_subcommand("predict", "score a corpus with a trained model");
    predict->add_option("--model", predict_cfg.model, "model path")->required();
    predict->add_option("--manifest", predict_cfg.manifest, "corpus manifest")->required();
    predict->add_option("--out", predict_cfg.out, "scores csv path")->default_val("scores.csv");
    predict->add_option("--features", predict_cfg.features, "feature cache (logreg models)");
    predict->add_option("--cap", predict_cfg.cap, "keep this many longest segments (set)")
        ->default_val(512);
    predict->callback([&] { run_predict(predict_cfg); });

    SplitConfig split_cfg;
    auto* split = app.add_subcommand("split", "categorize entries by prequalifier score");
    split->add_option("--manifest", split_cfg.manifest, "corpus manifest")->required();
    split->add_option("--out", split_cfg.out, "split csv path")->default_val("splits.csv");
    split->add_option("--band", split_cfg.band, "half width of the chance band around 0.5")
        ->default_val(0.1);
    split->add_flag("--nested-misclassified", split_cfg.nested,
                    "give wrong-side scores precedence over the band");
    split->callback([&] { run_split(split_cfg); });

    EvalConfig eval_cfg;
    auto* eval = app.add_subcommand("eval", "ROC, agreement, and report bundle");
    eval->add_option("--manifest", eval_cfg.manifest, "corpus manifest")->required();
    eval->add_option("--out", eval_cfg.out, "report directory")->default_val("reports");
    eval->add_option("--scores", eval_cfg.scores,
                     "cue scores as NAME=PATH (repeatable); default: prequalifier scores");
    eval->add_option("--band", eval_cfg.band, "half width of the chance band around 0.5")
        ->default_val(0.1);
    eval->add_flag("--nested-misclassified", eval_cfg.nested,
                   "give wrong-side scores precedence over the band");
    eval->add_flag("--svg", eval_cfg.svg, "also draw one ROC svg per category");
    eval->callback([&] { run_eval(eval_cfg); });

    SaliencyConfig saliency_cfg;
    auto* saliency = app.add_subcommand("saliency", "per-input attribution for one image");
    saliency->add_option("--model", saliency_cfg.model, "model path")->required();
    saliency->add_option("--manifest", saliency_cfg.manifest, "corpus manifest")->required();
    saliency->add_option("--id", saliency_cfg.id, "image id to explain")->required();
    saliency->add_option("--out", saliency_cfg.out, "output path")->default_val("saliency.txt");
    saliency->add_option("--features", saliency_cfg.features, "feature cache (logreg models)");
    saliency->add_option("--cap", saliency_cfg.cap, "keep this many longest segments (set)")
        ->default_val(512);
    saliency->callback([&] { run_saliency(saliency_cfg); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    } catch (const usage_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
