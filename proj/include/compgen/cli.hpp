#pragma once

/// @file
/// Config-driven experiment commands. Each command owns its output
/// directory and writes `config.json` (the fully resolved configuration)
/// and `seeds.json` next to its artifacts; rerunning a command from that
/// snapshot reproduces the artifacts byte for byte.

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "compgen/checkpoint.hpp"
#include "compgen/condgan.hpp"
#include "compgen/condvae.hpp"
#include "compgen/csv.hpp"
#include "compgen/dataset.hpp"
#include "compgen/error.hpp"
#include "compgen/evalharness.hpp"
#include "compgen/features.hpp"
#include "compgen/formula.hpp"
#include "compgen/synthetic.hpp"
#include "compgen/valency.hpp"

namespace compgen {

namespace fs = std::filesystem;

// --- base64 of little-endian f64 arrays ------------------------------------

namespace b64 {

inline constexpr std::string_view alphabet = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

inline std::string encode(std::string_view bytes) {
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    std::size_t i = 0;
    for (; i + 3 <= bytes.size(); i += 3) {
        const auto n = (std::uint32_t(std::uint8_t(bytes[i])) << 16) | (std::uint32_t(std::uint8_t(bytes[i + 1])) << 8) |
                       std::uint32_t(std::uint8_t(bytes[i + 2]));
        out += alphabet[(n >> 18) & 63];
        out += alphabet[(n >> 12) & 63];
        out += alphabet[(n >> 6) & 63];
        out += alphabet[n & 63];
    }
    const std::size_t rest = bytes.size() - i;
    if (rest > 0) {
        std::uint32_t n = std::uint32_t(std::uint8_t(bytes[i])) << 16;
        if (rest == 2) {
            n |= std::uint32_t(std::uint8_t(bytes[i + 1])) << 8;
        }
        out += alphabet[(n >> 18) & 63];
        out += alphabet[(n >> 12) & 63];
        out += rest == 2 ? alphabet[(n >> 6) & 63] : '=';
        out += '=';
    }
    return out;
}

inline std::string decode(std::string_view text) {
    require(text.size() % 4 == 0, ErrorCode::InvalidArgument, "base64 length is not a multiple of 4");
    auto value = [](char c) -> std::uint32_t {
        const auto pos = alphabet.find(c);
        require(pos != std::string_view::npos, ErrorCode::InvalidArgument, "invalid base64 character");
        return static_cast<std::uint32_t>(pos);
    };
    std::string out;
    for (std::size_t i = 0; i < text.size(); i += 4) {
        const bool pad2 = text[i + 2] == '=';
        const bool pad3 = text[i + 3] == '=';
        require(!pad2 || pad3, ErrorCode::InvalidArgument, "malformed base64 padding");
        require((!pad2 && !pad3) || i + 4 == text.size(), ErrorCode::InvalidArgument, "base64 padding mid-stream");
        std::uint32_t n = (value(text[i]) << 18) | (value(text[i + 1]) << 12);
        if (!pad2) {
            n |= value(text[i + 2]) << 6;
        }
        if (!pad3) {
            n |= value(text[i + 3]);
        }
        out += static_cast<char>((n >> 16) & 0xff);
        if (!pad2) {
            out += static_cast<char>((n >> 8) & 0xff);
        }
        if (!pad3) {
            out += static_cast<char>(n & 0xff);
        }
    }
    return out;
}

inline std::string encode_vector(std::span<const double> v) {
    std::string bytes;
    bytes.reserve(v.size() * 8);
    for (double d : v) {
        const auto bits = std::bit_cast<std::uint64_t>(d);
        for (int k = 0; k < 8; ++k) {
            bytes += static_cast<char>((bits >> (8 * k)) & 0xff);
        }
    }
    return encode(bytes);
}

inline std::vector<double> decode_vector(std::string_view text) {
    const std::string bytes = decode(text);
    require(bytes.size() % 8 == 0, ErrorCode::InvalidArgument, "encoded vector is not a whole number of doubles");
    std::vector<double> out;
    for (std::size_t i = 0; i < bytes.size(); i += 8) {
        std::uint64_t bits = 0;
        for (int k = 0; k < 8; ++k) {
            bits |= std::uint64_t(std::uint8_t(bytes[i + static_cast<std::size_t>(k)])) << (8 * k);
        }
        out.push_back(std::bit_cast<double>(bits));
    }
    return out;
}

} // namespace b64

// --- configuration ---------------------------------------------------------

struct RunPaths {
    std::string dataset;
    std::string descriptors;
    std::string valences;
    std::string checkpoint;
    std::string compositions;
};

struct EvalSettings {
    std::size_t n_per_property = 256;
    /// "train" or "test".
    std::string reference = "train";
    /// Caps the number of test properties per split; 0 uses all of them.
    std::size_t max_test_properties = 0;
    /// Properties for `generate` and the nearest-property histograms.
    std::vector<double> properties{-3.24, -2.03, -0.10};
    std::size_t n_generate = 256;
    std::size_t mh_properties = 10;
    std::size_t mh_samples_per_property = 25;
    std::size_t histogram_bins = 45;
    bool dnn_baseline = true;
    std::uint64_t seed = 0;
};

struct ExtrapolationSettings {
    std::vector<PropertyRange> ranges{{-4.5, 0.0}, {-4.5, -1.0}, {-4.5, -2.0}};
    std::vector<double> probes{-4.5, -4.0, -3.5, -3.0, -2.5, -2.0, -1.5, -1.0, -0.5, 0.0, 0.5, 1.0};
    std::size_t n_per_probe = 256;
};

struct SyntheticSettings {
    std::size_t records = 2000;
    double train_fraction = 0.8;
    bool run_extrapolation = true;
    std::uint64_t seed = 0;
};

struct RunConfig {
    std::uint64_t seed = 0;
    std::string model_kind = "condgan";
    Representation representation = Representation::B;
    RunPaths paths;
    SplitSpec split{0, 44040, 5506, 3, std::nullopt};
    GanTrainConfig condgan;
    VaeTrainConfig condvae;
    DnnTrainConfig dnn;
    MhConfig mh;
    EvalSettings eval;
    ExtrapolationSettings extrapolation;
    SyntheticSettings synthetic;
};

/// Stream ids for seeds derived from the master seed.
enum class SeedStream : std::uint64_t {
    Split = 101,
    CondGan = 102,
    CondVae = 103,
    Dnn = 104,
    Mh = 105,
    Eval = 106,
    Synthetic = 107,
};

inline std::uint64_t derive_seed(std::uint64_t master, SeedStream s) {
    return mix_seed(master, static_cast<std::uint64_t>(s));
}

inline nlohmann::json to_json(const RunConfig& c) {
    nlohmann::json j;
    j["seed"] = c.seed;
    j["model"] = {{"kind", c.model_kind}, {"representation", to_string(c.representation)}};
    j["paths"] = {{"dataset", c.paths.dataset},
                  {"descriptors", c.paths.descriptors},
                  {"valences", c.paths.valences},
                  {"checkpoint", c.paths.checkpoint},
                  {"compositions", c.paths.compositions}};
    j["split"] = {{"seed", c.split.seed},
                  {"train_count", c.split.train_count},
                  {"test_count", c.split.test_count},
                  {"repeats", c.split.repeats},
                  {"y_range", c.split.y_range ? nlohmann::json::array({c.split.y_range->first, c.split.y_range->second})
                                              : nlohmann::json(nullptr)}};
    j["condgan"] = to_json(c.condgan);
    j["condvae"] = to_json(c.condvae);
    j["dnn"] = to_json(c.dnn);
    j["mh"] = to_json(c.mh);
    j["eval"] = {{"n_per_property", c.eval.n_per_property},
                 {"reference", c.eval.reference},
                 {"max_test_properties", c.eval.max_test_properties},
                 {"properties", c.eval.properties},
                 {"n_generate", c.eval.n_generate},
                 {"mh_properties", c.eval.mh_properties},
                 {"mh_samples_per_property", c.eval.mh_samples_per_property},
                 {"histogram_bins", c.eval.histogram_bins},
                 {"dnn_baseline", c.eval.dnn_baseline},
                 {"seed", c.eval.seed}};
    nlohmann::json ranges = nlohmann::json::array();
    for (const auto& r : c.extrapolation.ranges) {
        ranges.push_back({r.lo, r.hi});
    }
    j["extrapolation"] = {
        {"ranges", ranges}, {"probes", c.extrapolation.probes}, {"n_per_probe", c.extrapolation.n_per_probe}};
    j["synthetic"] = {{"records", c.synthetic.records},
                      {"train_fraction", c.synthetic.train_fraction},
                      {"run_extrapolation", c.synthetic.run_extrapolation},
                      {"seed", c.synthetic.seed}};
    return j;
}

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& j, std::initializer_list<std::string_view> known,
                                const std::string& where) {
    require(j.is_object(), ErrorCode::ConfigError, where + " must be a JSON object");
    for (const auto& [key, value] : j.items()) {
        require(std::find(known.begin(), known.end(), key) != known.end(), ErrorCode::ConfigError,
                "unknown key '" + key + "' in " + where);
    }
}

template <typename T>
T get_or(const nlohmann::json& j, const char* key, T fallback, const std::string& where) {
    if (!j.contains(key)) {
        return fallback;
    }
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        fail(ErrorCode::ConfigError, where + "." + key + " has the wrong type");
    }
}

} // namespace detail

/// Parses a config document. Seeds absent from the document are derived
/// from the master seed.
inline RunConfig config_from_json(const nlohmann::json& j) {
    using detail::get_or;
    detail::reject_unknown_keys(j,
                                {"seed", "model", "paths", "split", "condgan", "condvae", "dnn", "mh", "eval",
                                 "extrapolation", "synthetic"},
                                "config");
    RunConfig c;
    c.seed = get_or<std::uint64_t>(j, "seed", 0, "config");
    const auto section = [&](const char* key) { return j.contains(key) ? j.at(key) : nlohmann::json::object(); };
    const auto has_seed = [&](const char* key) { return j.contains(key) && j.at(key).contains("seed"); };

    try {
        const auto model = section("model");
        detail::reject_unknown_keys(model, {"kind", "representation"}, "model");
        c.model_kind = get_or<std::string>(model, "kind", c.model_kind, "model");
        require(c.model_kind == "condgan" || c.model_kind == "condvae", ErrorCode::ConfigError,
                "model.kind must be 'condgan' or 'condvae'");
        c.representation = representation_from_string(get_or<std::string>(model, "representation", "b", "model"));

        const auto paths = section("paths");
        detail::reject_unknown_keys(paths, {"dataset", "descriptors", "valences", "checkpoint", "compositions"},
                                    "paths");
        c.paths.dataset = get_or<std::string>(paths, "dataset", "", "paths");
        c.paths.descriptors = get_or<std::string>(paths, "descriptors", "", "paths");
        c.paths.valences = get_or<std::string>(paths, "valences", "", "paths");
        c.paths.checkpoint = get_or<std::string>(paths, "checkpoint", "", "paths");
        c.paths.compositions = get_or<std::string>(paths, "compositions", "", "paths");

        const auto split = section("split");
        detail::reject_unknown_keys(split, {"seed", "train_count", "test_count", "repeats", "y_range"}, "split");
        c.split.train_count = get_or<std::size_t>(split, "train_count", c.split.train_count, "split");
        c.split.test_count = get_or<std::size_t>(split, "test_count", c.split.test_count, "split");
        c.split.repeats = get_or<std::size_t>(split, "repeats", c.split.repeats, "split");
        require(c.split.repeats >= 1, ErrorCode::ConfigError, "split.repeats must be >= 1");
        if (split.contains("y_range") && !split.at("y_range").is_null()) {
            const auto r = split.at("y_range").get<std::vector<double>>();
            require(r.size() == 2 && r[0] <= r[1], ErrorCode::ConfigError, "split.y_range must be [lo, hi]");
            c.split.y_range = std::pair{r[0], r[1]};
        }
        c.split.seed = has_seed("split") ? split.at("seed").get<std::uint64_t>()
                                         : derive_seed(c.seed, SeedStream::Split);

        c.condgan = gan_config_from_json(section("condgan"), c.condgan);
        if (!has_seed("condgan")) {
            c.condgan.seed = derive_seed(c.seed, SeedStream::CondGan);
        }
        c.condvae = vae_config_from_json(section("condvae"), c.condvae);
        if (!has_seed("condvae")) {
            c.condvae.seed = derive_seed(c.seed, SeedStream::CondVae);
        }
        c.dnn = dnn_config_from_json(section("dnn"), c.dnn);
        if (!has_seed("dnn")) {
            c.dnn.seed = derive_seed(c.seed, SeedStream::Dnn);
        }
        c.mh = mh_config_from_json(section("mh"), c.mh);
        if (!has_seed("mh")) {
            c.mh.seed = derive_seed(c.seed, SeedStream::Mh);
        }

        const auto ev = section("eval");
        detail::reject_unknown_keys(ev,
                                    {"n_per_property", "reference", "max_test_properties", "properties", "n_generate",
                                     "mh_properties", "mh_samples_per_property", "histogram_bins", "dnn_baseline",
                                     "seed"},
                                    "eval");
        c.eval.n_per_property = get_or(ev, "n_per_property", c.eval.n_per_property, "eval");
        c.eval.reference = get_or(ev, "reference", c.eval.reference, "eval");
        require(c.eval.reference == "train" || c.eval.reference == "test", ErrorCode::ConfigError,
                "eval.reference must be 'train' or 'test'");
        c.eval.max_test_properties = get_or(ev, "max_test_properties", c.eval.max_test_properties, "eval");
        c.eval.properties = get_or(ev, "properties", c.eval.properties, "eval");
        c.eval.n_generate = get_or(ev, "n_generate", c.eval.n_generate, "eval");
        c.eval.mh_properties = get_or(ev, "mh_properties", c.eval.mh_properties, "eval");
        c.eval.mh_samples_per_property = get_or(ev, "mh_samples_per_property", c.eval.mh_samples_per_property, "eval");
        c.eval.histogram_bins = get_or(ev, "histogram_bins", c.eval.histogram_bins, "eval");
        c.eval.dnn_baseline = get_or(ev, "dnn_baseline", c.eval.dnn_baseline, "eval");
        c.eval.seed = has_seed("eval") ? ev.at("seed").get<std::uint64_t>() : derive_seed(c.seed, SeedStream::Eval);
        require(c.eval.n_per_property >= 1 && c.eval.n_generate >= 1 && c.eval.histogram_bins >= 1,
                ErrorCode::ConfigError, "eval counts must be >= 1");

        const auto ex = section("extrapolation");
        detail::reject_unknown_keys(ex, {"ranges", "probes", "n_per_probe"}, "extrapolation");
        if (ex.contains("ranges")) {
            c.extrapolation.ranges.clear();
            for (const auto& r : ex.at("ranges")) {
                const auto v = r.get<std::vector<double>>();
                require(v.size() == 2 && v[0] <= v[1], ErrorCode::ConfigError,
                        "extrapolation ranges must be [lo, hi] pairs");
                c.extrapolation.ranges.push_back({v[0], v[1]});
            }
        }
        c.extrapolation.probes = get_or(ex, "probes", c.extrapolation.probes, "extrapolation");
        c.extrapolation.n_per_probe = get_or(ex, "n_per_probe", c.extrapolation.n_per_probe, "extrapolation");

        const auto sy = section("synthetic");
        detail::reject_unknown_keys(sy, {"records", "train_fraction", "run_extrapolation", "seed"}, "synthetic");
        c.synthetic.records = get_or(sy, "records", c.synthetic.records, "synthetic");
        c.synthetic.train_fraction = get_or(sy, "train_fraction", c.synthetic.train_fraction, "synthetic");
        require(c.synthetic.train_fraction > 0.0 && c.synthetic.train_fraction < 1.0, ErrorCode::ConfigError,
                "synthetic.train_fraction must lie in (0, 1)");
        c.synthetic.run_extrapolation = get_or(sy, "run_extrapolation", c.synthetic.run_extrapolation, "synthetic");
        c.synthetic.seed =
            has_seed("synthetic") ? sy.at("seed").get<std::uint64_t>() : derive_seed(c.seed, SeedStream::Synthetic);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::ConfigError, std::string("malformed config: ") + e.what());
    } catch (const Error& e) {
        if (e.code() == ErrorCode::ConfigError) {
            throw;
        }
        fail(ErrorCode::ConfigError, e.what());
    }
    return c;
}

/// Replaces the master seed and re-derives every sub-seed from it.
inline void override_seed(RunConfig& c, std::uint64_t seed) {
    c.seed = seed;
    c.split.seed = derive_seed(seed, SeedStream::Split);
    c.condgan.seed = derive_seed(seed, SeedStream::CondGan);
    c.condvae.seed = derive_seed(seed, SeedStream::CondVae);
    c.dnn.seed = derive_seed(seed, SeedStream::Dnn);
    c.mh.seed = derive_seed(seed, SeedStream::Mh);
    c.eval.seed = derive_seed(seed, SeedStream::Eval);
    c.synthetic.seed = derive_seed(seed, SeedStream::Synthetic);
}

inline nlohmann::json seed_record(const RunConfig& c) {
    return {{"master", c.seed},           {"split", c.split.seed}, {"condgan", c.condgan.seed},
            {"condvae", c.condvae.seed},  {"dnn", c.dnn.seed},     {"mh", c.mh.seed},
            {"eval", c.eval.seed},        {"synthetic", c.synthetic.seed}};
}

/// Directory holding bundled data files: `$COMPGEN_DATA_DIR` when set,
/// otherwise the compiled-in default.
inline std::string default_data_dir() {
    if (const char* env = std::getenv("COMPGEN_DATA_DIR"); env != nullptr && *env != '\0') {
        return env;
    }
#ifdef COMPGEN_DEFAULT_DATA_DIR
    return COMPGEN_DEFAULT_DATA_DIR;
#else
    return "data";
#endif
}

/// Makes relative paths absolute against `base` and fills the valence
/// table default from the data directory.
inline void resolve_paths(RunConfig& c, const fs::path& base) {
    auto resolve = [&](std::string& p) {
        if (!p.empty() && fs::path(p).is_relative()) {
            p = (base / p).lexically_normal().string();
        }
    };
    if (c.paths.valences.empty()) {
        c.paths.valences = (fs::path(default_data_dir()) / "oxidation_states.csv").string();
    }
    resolve(c.paths.dataset);
    resolve(c.paths.descriptors);
    resolve(c.paths.valences);
    resolve(c.paths.checkpoint);
    resolve(c.paths.compositions);
}

inline RunConfig load_run_config(const std::string& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(csv::read_text(path));
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::ConfigError, "'" + path + "' is not valid JSON: " + e.what());
    }
    RunConfig c = config_from_json(j);
    resolve_paths(c, fs::absolute(path).parent_path());
    return c;
}

inline void require_file(const std::string& path, const char* what) {
    require(!path.empty(), ErrorCode::ConfigError, std::string("paths.") + what + " is not set");
    require(fs::is_regular_file(path), ErrorCode::ConfigError,
            std::string("paths.") + what + " '" + path + "' does not exist");
}

// --- shared pipeline state ---------------------------------------------------

struct DataContext {
    std::vector<DatasetRecord> records;
    FeatureSchema schema;
    std::optional<DescriptorTable> descriptors;
    std::vector<SplitIndices> splits;

    const DescriptorTable* table() const { return descriptors ? &*descriptors : nullptr; }
};

inline DataContext load_data(const RunConfig& c) {
    require_file(c.paths.dataset, "dataset");
    DataContext ctx;
    const auto loaded = load_dataset(c.paths.dataset, true);
    ctx.records = deduplicate(loaded.records);
    ctx.schema.element_vocab = build_vocab(ctx.records);
    ctx.schema.representation = c.representation;
    if (c.representation == Representation::BP) {
        require_file(c.paths.descriptors, "descriptors");
        ctx.descriptors = load_descriptor_table(c.paths.descriptors);
        ctx.schema.descriptor_names = ctx.descriptors->names;
    }
    ctx.splits = split_indices(ctx.records, c.split);
    return ctx;
}

/// Normalized features of one split side plus the stats fitted on its train side.
struct SplitData {
    Tensor train_x;
    std::vector<double> train_y;
    Tensor test_x;
    std::vector<double> test_y;
    std::vector<std::string> train_labels;
    std::vector<std::string> test_labels;
    NormalizationStats stats;
};

inline SplitData featurize_split(const DataContext& ctx, const SplitIndices& s) {
    SplitData d;
    const auto train = select(ctx.records, s.train);
    const auto test = select(ctx.records, s.test);
    const Tensor raw_train = feature_matrix(train, ctx.schema, ctx.table());
    d.stats = fit_minmax(raw_train);
    d.train_x = apply_minmax(raw_train, d.stats);
    d.test_x = apply_minmax(feature_matrix(test, ctx.schema, ctx.table()), d.stats);
    d.train_y = properties(train);
    d.test_y = properties(test);
    for (const auto& r : train) {
        d.train_labels.push_back(r.formula);
    }
    for (const auto& r : test) {
        d.test_labels.push_back(r.formula);
    }
    return d;
}

/// A trained generator together with the feature space it lives in.
struct TrainedModel {
    std::string kind;
    FeatureSchema schema;
    NormalizationStats stats;
    CondGanModel gan;
    CondVaeModel vae;

    Tensor generate(double y, std::size_t n, std::uint64_t seed) const {
        return kind == "condgan" ? gan_generate(gan, y, n, seed) : vae_generate(vae, y, n, seed);
    }

    bool has_predictor() const { return kind == "condgan"; }

    std::vector<double> predict(const Tensor& x) const { return predict_property(gan, x); }
};

struct TrainOutput {
    TrainedModel model;
    std::string trace_csv;
};

inline TrainOutput train_model(const RunConfig& c, const FeatureSchema& schema, const NormalizationStats& stats,
                               const Tensor& x, std::span<const double> y) {
    TrainOutput out;
    out.model.kind = c.model_kind;
    out.model.schema = schema;
    out.model.stats = stats;
    if (c.model_kind == "condgan") {
        auto r = train_condgan(x, y, c.condgan);
        out.model.gan = std::move(r.model);
        out.trace_csv = "iteration,wass_fake,wass_real,gp,aux_fake,aux_real,gen_loss\n";
        for (const auto& t : r.trace) {
            out.trace_csv += std::to_string(t.iteration) + "," + csv::format_double(t.wass_fake) + "," +
                             csv::format_double(t.wass_real) + "," + csv::format_double(t.gp) + "," +
                             csv::format_double(t.aux_fake) + "," + csv::format_double(t.aux_real) + "," +
                             csv::format_double(t.gen_loss) + "\n";
        }
    } else {
        auto r = train_condvae(x, y, c.condvae);
        out.model.vae = std::move(r.model);
        out.trace_csv = "iteration,recon,kl,total\n";
        for (const auto& t : r.trace) {
            out.trace_csv += std::to_string(t.iteration) + "," + csv::format_double(t.recon) + "," +
                             csv::format_double(t.kl) + "," + csv::format_double(t.total) + "\n";
        }
    }
    return out;
}

inline ModelCheckpoint to_checkpoint(const TrainedModel& m, const nlohmann::json& train_config) {
    ModelCheckpoint ckpt = m.kind == "condgan" ? to_checkpoint(m.gan) : to_checkpoint(m.vae);
    ckpt.meta["schema"] = to_json(m.schema);
    ckpt.meta["stats"] = to_json(m.stats);
    ckpt.meta["train_config"] = train_config;
    return ckpt;
}

inline TrainedModel model_from_checkpoint(const ModelCheckpoint& ckpt) {
    TrainedModel m;
    m.kind = ckpt.model_kind;
    require(m.kind == "condgan" || m.kind == "condvae", ErrorCode::InvalidArgument,
            "checkpoint holds an unknown model kind '" + m.kind + "'");
    require(ckpt.meta.contains("schema") && ckpt.meta.contains("stats"), ErrorCode::InvalidArgument,
            "checkpoint carries no feature schema");
    m.schema = schema_from_json(ckpt.meta.at("schema"));
    m.stats = stats_from_json(ckpt.meta.at("stats"));
    if (m.kind == "condgan") {
        m.gan = condgan_from_checkpoint(ckpt);
    } else {
        m.vae = condvae_from_checkpoint(ckpt);
    }
    return m;
}

inline TrainedModel load_model(const RunConfig& c) {
    require_file(c.paths.checkpoint, "checkpoint");
    return model_from_checkpoint(load_checkpoint(c.paths.checkpoint));
}

inline void begin_run(const RunConfig& c, const fs::path& out) {
    fs::create_directories(out);
    csv::write_text((out / "config.json").string(), to_json(c).dump(2) + "\n");
    csv::write_text((out / "seeds.json").string(), seed_record(c).dump(2) + "\n");
}

inline void write_json(const fs::path& path, const nlohmann::json& j) {
    csv::write_text(path.string(), j.dump(2) + "\n");
}

inline std::string feature_header(const FeatureSchema& s) {
    std::string h;
    for (const auto& e : s.element_vocab) {
        h += (h.empty() ? "" : ",") + e;
    }
    for (const auto& d : s.descriptor_names) {
        h += "," + d;
    }
    return h;
}

inline std::string feature_csv(const FeatureSchema& s, const Tensor& x, std::span<const double> y) {
    std::string out = feature_header(s) + ",y\n";
    for (std::size_t r = 0; r < x.rows(); ++r) {
        for (double v : x.row_span(r)) {
            out += csv::format_double(v) + ",";
        }
        out += csv::format_double(y[r]) + "\n";
    }
    return out;
}

// --- commands ----------------------------------------------------------------

inline void cmd_featurize(const RunConfig& c, const fs::path& out) {
    const DataContext ctx = load_data(c);
    begin_run(c, out);
    const SplitData d = featurize_split(ctx, ctx.splits.front());
    write_json(out / "schema.json", to_json(ctx.schema));
    write_json(out / "stats.json", to_json(d.stats));
    write_json(out / "split_manifest.json", split_manifest(c.split, ctx.splits));
    csv::write_text((out / "features_train.csv").string(), feature_csv(ctx.schema, d.train_x, d.train_y));
    csv::write_text((out / "features_test.csv").string(), feature_csv(ctx.schema, d.test_x, d.test_y));
}

inline nlohmann::json train_config_json(const RunConfig& c) {
    return c.model_kind == "condgan" ? to_json(c.condgan) : to_json(c.condvae);
}

inline void cmd_train(const RunConfig& c, const fs::path& out) {
    const DataContext ctx = load_data(c);
    begin_run(c, out);
    const SplitData d = featurize_split(ctx, ctx.splits.front());
    const TrainOutput t = train_model(c, ctx.schema, d.stats, d.train_x, d.train_y);
    save_checkpoint((out / "model.ckpt").string(), to_checkpoint(t.model, train_config_json(c)));
    csv::write_text((out / "trace.csv").string(), t.trace_csv);
}

inline constexpr std::string_view compositions_header = "target_y,raw_vector_b64,composition,predicted_y";

struct CompositionRow {
    double target_y = 0.0;
    std::vector<double> raw;
    std::string composition;
    std::optional<double> predicted_y;
    std::string line;
};

inline std::string format_composition_row(const CompositionRow& r) {
    return csv::format_double(r.target_y) + "," + b64::encode_vector(r.raw) + "," + r.composition + "," +
           (r.predicted_y ? csv::format_double(*r.predicted_y) : "");
}

inline std::vector<CompositionRow> read_compositions(const std::string& path) {
    const auto lines = csv::read_lines(path);
    require(!lines.empty() && lines[0] == compositions_header, ErrorCode::IoError,
            "'" + path + "' is not a compositions file");
    std::vector<CompositionRow> rows;
    for (std::size_t ln = 1; ln < lines.size(); ++ln) {
        if (lines[ln].empty()) {
            continue;
        }
        const std::string where = path + ":" + std::to_string(ln + 1);
        const auto f = csv::split(lines[ln]);
        require(f.size() == 4, ErrorCode::IoError, where + ": expected 4 fields");
        CompositionRow r;
        const auto y = csv::parse_double(f[0]);
        require(y.has_value(), ErrorCode::IoError, where + ": bad target_y");
        r.target_y = *y;
        r.raw = b64::decode_vector(f[1]);
        r.composition = f[2];
        if (!f[3].empty()) {
            const auto p = csv::parse_double(f[3]);
            require(p.has_value(), ErrorCode::IoError, where + ": bad predicted_y");
            r.predicted_y = *p;
        }
        r.line = lines[ln];
        rows.push_back(std::move(r));
    }
    return rows;
}

inline std::string render_vector(std::span<const double> x, const FeatureSchema& s, double th) {
    GenerationOptions opt;
    opt.vocab = s.element_vocab;
    opt.th = th;
    return render_generated(x, opt);
}

inline void cmd_generate(const RunConfig& c, const fs::path& out) {
    const TrainedModel m = load_model(c);
    begin_run(c, out);
    std::string text(compositions_header);
    text += '\n';
    for (std::size_t i = 0; i < c.eval.properties.size(); ++i) {
        const double y = c.eval.properties[i];
        const Tensor batch = m.generate(y, c.eval.n_generate, mix_seed(c.eval.seed, i));
        const auto predicted = m.has_predictor() ? m.predict(batch) : std::vector<double>{};
        for (std::size_t r = 0; r < batch.rows(); ++r) {
            CompositionRow row;
            row.target_y = y;
            row.raw.assign(batch.row_span(r).begin(), batch.row_span(r).end());
            row.composition = render_vector(row.raw, m.schema, c.mh.th);
            if (m.has_predictor()) {
                row.predicted_y = predicted[r];
            }
            text += format_composition_row(row) + "\n";
        }
    }
    csv::write_text((out / "compositions.csv").string(), text);
}

inline void cmd_modify(const RunConfig& c, const fs::path& out) {
    const TrainedModel m = load_model(c);
    require_file(c.paths.compositions, "compositions");
    require_file(c.paths.valences, "valences");
    const ValenceTable table = load_valence_table(c.paths.valences);
    std::optional<DescriptorTable> descriptors;
    if (m.schema.representation == Representation::BP) {
        require_file(c.paths.descriptors, "descriptors");
        descriptors = load_descriptor_table(c.paths.descriptors);
    }
    const auto rows = read_compositions(c.paths.compositions);
    begin_run(c, out);

    const VectorSpace space{m.schema, m.stats, descriptors ? &*descriptors : nullptr};
    const auto& vocab = m.schema.element_vocab;
    std::string text(compositions_header);
    text += '\n';
    std::string report_rows =
        "target_y,raw_composition,modified_composition,raw_net_valence,modified_net_valence,balanced,iterations\n";
    std::vector<double> raw_valence;
    std::vector<double> modified_valence;
    std::size_t unbalanced = 0;
    std::size_t skipped = 0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& row = rows[i];
        require(row.raw.size() == m.schema.dim(), ErrorCode::DimensionMismatch,
                "compositions row " + std::to_string(i + 1) + " does not match the checkpoint feature width");
        Composition raw_comp;
        try {
            raw_comp = vector_to_composition(row.raw, vocab, c.mh.th);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::NoSurvivingAtoms) {
                throw;
            }
            text += row.line + "\n";
            ++skipped;
            continue;
        }
        MhConfig mh = c.mh;
        mh.seed = mix_seed(c.mh.seed, i);
        const MhResult result = mh_modify(row.raw, vocab, mh, table);
        const double before = net_valence(raw_comp, table, mh.max_valence_combinations);
        const double after = result.iterations == 0 ? before
                                                    : net_valence(result.composition, table,
                                                                  mh.max_valence_combinations);
        raw_valence.push_back(before);
        modified_valence.push_back(after);
        unbalanced += result.balanced ? 0 : 1;
        std::string modified_text = row.composition;
        if (result.iterations == 0) {
            text += row.line + "\n";
        } else {
            CompositionRow next;
            next.target_y = row.target_y;
            next.raw = repaired_vector(row.raw, result, space);
            next.composition = format_composition(result.composition);
            if (m.has_predictor()) {
                next.predicted_y = m.predict(Tensor(1, next.raw.size(), next.raw)).front();
            }
            modified_text = next.composition;
            text += format_composition_row(next) + "\n";
        }
        report_rows += csv::format_double(row.target_y) + "," + row.composition + "," + modified_text + "," +
                       csv::format_double(before) + "," + csv::format_double(after) + "," +
                       (result.balanced ? "1" : "0") + "," + std::to_string(result.iterations) + "\n";
    }
    csv::write_text((out / "compositions_modified.csv").string(), text);
    csv::write_text((out / "valence_rows.csv").string(), report_rows);
    write_json(out / "valence_report.json", {{"raw", to_json(mean_std(raw_valence))},
                                             {"modified", to_json(mean_std(modified_valence))},
                                             {"unbalanced", unbalanced},
                                             {"skipped_no_atoms", skipped},
                                             {"rows", rows.size()}});
}

namespace detail {

inline std::vector<double> limited(std::span<const double> y, std::size_t cap) {
    const std::size_t n = cap == 0 ? y.size() : std::min(cap, y.size());
    return {y.begin(), y.begin() + static_cast<std::ptrdiff_t>(n)};
}

/// `count` properties spread evenly over the sorted `values`.
inline std::vector<double> spread(std::span<const double> values, std::size_t count) {
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> out;
    if (sorted.empty() || count == 0) {
        return out;
    }
    for (std::size_t k = 0; k < count; ++k) {
        const std::size_t idx = count == 1 ? sorted.size() / 2 : k * (sorted.size() - 1) / (count - 1);
        out.push_back(sorted[idx]);
    }
    return out;
}

} // namespace detail

/// Generation, predictor, valence-repair and histogram reports over every
/// split repeat. With `paths.checkpoint` set, only split 0 is evaluated, with
/// that model.
inline void cmd_evaluate(const RunConfig& c, const fs::path& out) {
    const DataContext ctx = load_data(c);
    std::optional<TrainedModel> given;
    if (!c.paths.checkpoint.empty()) {
        given = load_model(c);
        require(given->schema.element_vocab == ctx.schema.element_vocab &&
                    given->schema.representation == ctx.schema.representation,
                ErrorCode::SchemaMismatch, "checkpoint schema differs from the dataset schema");
    }
    require_file(c.paths.valences, "valences");
    const ValenceTable valences = load_valence_table(c.paths.valences);
    begin_run(c, out);

    const bool bp = ctx.schema.representation == Representation::BP;
    const std::size_t repeats = given ? 1 : ctx.splits.size();
    EvalReport full;
    full.model_kind = c.model_kind;
    full.representation = to_string(ctx.schema.representation);
    full.dim = ctx.schema.dim();
    full.config = train_config_json(c);
    EvalReport b_slice = full;
    b_slice.slice = "x^b";
    b_slice.dim = ctx.schema.b_dim();
    std::vector<SampleRecord> samples;
    std::vector<SampleRecord> b_samples;
    nlohmann::json predictor = {{"splits", nlohmann::json::array()}};
    std::vector<double> p_mae, p_rmse, d_mae, d_rmse;

    for (std::size_t r = 0; r < repeats; ++r) {
        const SplitData d = featurize_split(ctx, ctx.splits[r]);
        TrainedModel model;
        if (given) {
            model = *given;
            require(given->stats.min == d.stats.min && given->stats.max == d.stats.max, ErrorCode::SchemaMismatch,
                    "checkpoint normalization differs from split 0 of this dataset");
        } else {
            const TrainOutput t = train_model(c, ctx.schema, d.stats, d.train_x, d.train_y);
            model = t.model;
            csv::write_text((out / ("trace_split" + std::to_string(r) + ".csv")).string(), t.trace_csv);
        }
        const bool use_test = c.eval.reference == "test";
        const ReferenceSet ref{use_test ? d.test_x : d.train_x, use_test ? d.test_y : d.train_y,
                               use_test ? d.test_labels : d.train_labels};
        GenerationOptions opt;
        opt.n_per_property = c.eval.n_per_property;
        opt.seed = mix_seed(c.eval.seed, r);
        opt.b_dim = ctx.schema.b_dim();
        opt.vocab = ctx.schema.element_vocab;
        opt.th = c.mh.th;
        opt.with_b_slice = bp;
        const auto targets = detail::limited(d.test_y, c.eval.max_test_properties);
        const auto gen = [&](double y, std::size_t n, std::uint64_t s) { return model.generate(y, n, s); };
        const GenerationEval ev = eval_generation(gen, targets, ref, opt, r);
        full.seeds.push_back(ctx.splits[r].seed);
        full.splits.push_back(ev.full);
        samples.insert(samples.end(), ev.samples.begin(), ev.samples.end());
        if (bp) {
            b_slice.seeds.push_back(ctx.splits[r].seed);
            b_slice.splits.push_back(*ev.b_slice);
            b_samples.insert(b_samples.end(), ev.b_slice_samples.begin(), ev.b_slice_samples.end());
        }

        nlohmann::json split_pred = {{"split", r}};
        if (model.has_predictor()) {
            const auto e = eval_predictor([&](const Tensor& x) { return model.predict(x); }, d.test_x, d.test_y);
            split_pred["p_head"] = {{"mae", e.mae}, {"rmse", e.rmse}};
            p_mae.push_back(e.mae);
            p_rmse.push_back(e.rmse);
        }
        if (c.eval.dnn_baseline) {
            DnnTrainConfig dc = c.dnn;
            dc.seed = mix_seed(c.dnn.seed, r);
            const DnnBaseline dnn = train_dnn_baseline(d.train_x, d.train_y, dc);
            const auto e = eval_predictor([&](const Tensor& x) { return dnn.predict(x); }, d.test_x, d.test_y);
            split_pred["dnn"] = {{"mae", e.mae}, {"rmse", e.rmse}};
            d_mae.push_back(e.mae);
            d_rmse.push_back(e.rmse);
        }
        predictor["splits"].push_back(split_pred);

        if (r == 0) {
            // Nearest-property histograms at the configured properties.
            const BinSpec bins = bins_covering(d.train_y, c.eval.histogram_bins);
            emit_histogram(d.train_y, bins, (out / "property_histogram.tsv").string());
            for (std::size_t i = 0; i < c.eval.properties.size(); ++i) {
                GenerationOptions hopt;
                hopt.n_per_property = c.eval.n_generate;
                hopt.seed = mix_seed(c.eval.seed, 1000 + i);
                const auto h = eval_generation(gen, std::span(c.eval.properties).subspan(i, 1), ref, hopt);
                std::vector<double> near;
                for (const auto& s : h.samples) {
                    near.push_back(s.near_y);
                }
                emit_histogram(near, bins, (out / ("near_y_histogram_" + std::to_string(i) + ".tsv")).string());
            }

            // Valence repair on a batch generated from evenly spread test properties.
            const auto mh_targets = detail::spread(d.test_y, c.eval.mh_properties);
            std::vector<double> batch_y;
            std::vector<double> values;
            for (std::size_t i = 0; i < mh_targets.size(); ++i) {
                const Tensor b = model.generate(mh_targets[i], c.eval.mh_samples_per_property,
                                                mix_seed(c.eval.seed, 2000 + i));
                values.insert(values.end(), b.values().begin(), b.values().end());
                batch_y.insert(batch_y.end(), b.rows(), mh_targets[i]);
            }
            if (!batch_y.empty()) {
                const Tensor batch(batch_y.size(), ctx.schema.dim(), values);
                const VectorSpace space{ctx.schema, d.stats, ctx.table()};
                const MhEvalReport mh = eval_mh(batch, batch_y, space, valences, ref, c.mh);
                write_json(out / "mh_report.json", to_json(mh));
                csv::write_text((out / "mh_rows.csv").string(), format_mh_rows_csv(mh.rows));
            }
        }
    }

    write_json(out / "report.json", to_json(full));
    csv::write_text((out / "samples.csv").string(), format_samples_csv(samples));
    if (bp) {
        write_json(out / "report_xb.json", to_json(b_slice));
        csv::write_text((out / "samples_xb.csv").string(), format_samples_csv(b_samples));
    }
    if (!p_mae.empty()) {
        predictor["p_head"] = {{"mae", to_json(mean_std(p_mae))}, {"rmse", to_json(mean_std(p_rmse))}};
    }
    if (!d_mae.empty()) {
        predictor["dnn"] = {{"mae", to_json(mean_std(d_mae))}, {"rmse", to_json(mean_std(d_rmse))}};
    }
    write_json(out / "predictor.json", predictor);
}

/// Extrapolation curves: one model per training range, each probed across
/// the full configured probe grid against the unfiltered training pool.
inline void cmd_extrapolate(const RunConfig& c, const fs::path& out) {
    RunConfig unfiltered = c;
    unfiltered.split.y_range.reset();
    unfiltered.split.repeats = 1;
    const DataContext ctx = load_data(unfiltered);
    require(!c.extrapolation.ranges.empty() && !c.extrapolation.probes.empty(), ErrorCode::ConfigError,
            "extrapolation needs at least one range and one probe");
    begin_run(c, out);
    const SplitData d = featurize_split(ctx, ctx.splits.front());
    const ReferenceSet ref{d.train_x, d.train_y, d.train_labels};
    std::size_t k = 0;
    const TrainerFn trainer = [&](const Tensor& x, std::span<const double> y) -> GeneratorFn {
        const TrainOutput t = train_model(c, ctx.schema, d.stats, x, y);
        csv::write_text((out / ("trace_range" + std::to_string(k++) + ".csv")).string(), t.trace_csv);
        return [model = t.model](double yy, std::size_t n, std::uint64_t s) { return model.generate(yy, n, s); };
    };
    const auto curves = extrapolation_sweep(d.train_x, d.train_y, c.extrapolation.ranges, trainer,
                                            c.extrapolation.probes, ref, c.extrapolation.n_per_probe, c.eval.seed);
    csv::write_text((out / "curves.tsv").string(), format_curves_tsv(curves));
}

/// Synthetic counterpart of an experiment config: dataset, descriptors and
/// valence table are generated into `out/data`, split sizes follow the
/// synthetic train fraction and properties are drawn from the synthetic
/// support.
inline RunConfig synthetic_config(const RunConfig& c, const fs::path& data_dir, const SyntheticBenchmark& bench) {
    RunConfig s = c;
    s.paths.dataset = (data_dir / "dataset.csv").string();
    s.paths.descriptors = (data_dir / "descriptors.csv").string();
    s.paths.valences = (data_dir / "valences.csv").string();
    const std::size_t n = bench.records.size();
    s.split.train_count = static_cast<std::size_t>(static_cast<double>(n) * c.synthetic.train_fraction);
    s.split.test_count = n - s.split.train_count;
    const auto y = properties(bench.records);
    const auto [lo, hi] = std::minmax_element(y.begin(), y.end());
    const double span = *hi - *lo;
    s.eval.properties = {*lo + 0.2 * span, *lo + 0.5 * span, *lo + 0.8 * span};
    s.extrapolation.ranges = {{*lo, *hi}, {*lo, *lo + 0.6 * span}, {*lo, *lo + 0.3 * span}};
    s.extrapolation.probes.clear();
    for (int i = 0; i <= 10; ++i) {
        s.extrapolation.probes.push_back(*lo + span * i / 10.0);
    }
    return s;
}

inline std::string format_descriptor_table(const DescriptorTable& t) {
    std::string out = "element";
    for (const auto& n : t.names) {
        out += "," + n;
    }
    out += "\n";
    std::vector<std::string> symbols;
    for (const auto& [sym, row] : t.rows) {
        symbols.push_back(sym);
    }
    std::sort(symbols.begin(), symbols.end(),
              [](const auto& a, const auto& b) { return *atomic_number(a) < *atomic_number(b); });
    for (const auto& sym : symbols) {
        out += sym;
        for (double v : t.rows.at(sym)) {
            out += "," + csv::format_double(v);
        }
        out += "\n";
    }
    return out;
}

inline void cmd_synthbench(const RunConfig& c, const fs::path& out) {
    begin_run(c, out);
    const SyntheticBenchmark bench = make_synthetic_benchmark(c.synthetic.records, c.synthetic.seed);
    const fs::path data = fs::absolute(out) / "data";
    fs::create_directories(data);
    write_dataset((data / "dataset.csv").string(), bench.records);
    csv::write_text((data / "descriptors.csv").string(), format_descriptor_table(bench.descriptors));
    csv::write_text((data / "valences.csv").string(), format_valence_table(bench.valences));

    RunConfig s = synthetic_config(c, data, bench);
    cmd_featurize(s, out / "featurize");
    cmd_train(s, out / "train");
    s.paths.checkpoint = (fs::absolute(out) / "train" / "model.ckpt").string();
    cmd_generate(s, out / "generate");
    s.paths.compositions = (fs::absolute(out) / "generate" / "compositions.csv").string();
    cmd_modify(s, out / "modify");
    cmd_evaluate(s, out / "evaluate");
    if (c.synthetic.run_extrapolation) {
        s.paths.checkpoint.clear();
        s.paths.compositions.clear();
        cmd_extrapolate(s, out / "extrapolate");
    }
}

inline constexpr std::array<std::string_view, 7> command_names{"featurize", "train",       "generate", "modify",
                                                               "evaluate",  "extrapolate", "synthbench"};

inline void run_command(std::string_view name, const RunConfig& c, const fs::path& out) {
    if (name == "featurize") {
        cmd_featurize(c, out);
    } else if (name == "train") {
        cmd_train(c, out);
    } else if (name == "generate") {
        cmd_generate(c, out);
    } else if (name == "modify") {
        cmd_modify(c, out);
    } else if (name == "evaluate") {
        cmd_evaluate(c, out);
    } else if (name == "extrapolate") {
        cmd_extrapolate(c, out);
    } else if (name == "synthbench") {
        cmd_synthbench(c, out);
    } else {
        fail(ErrorCode::ConfigError, "unknown command '" + std::string(name) + "'");
    }
}

/// Machine-readable failure record.
inline nlohmann::json error_record(std::string_view command, std::string_view code, std::string_view message) {
    return {{"status", "error"}, {"command", command}, {"code", code}, {"message", message}};
}

} // namespace compgen
