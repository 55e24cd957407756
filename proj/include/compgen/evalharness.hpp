#pragma once

/// @file
/// Evaluation protocol: nearest-neighbor fidelity of generated vectors,
/// property-predictor comparison against a plain regression network,
/// before/after scoring of valence repair, extrapolation sweeps and
/// histogram emission.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "compgen/csv.hpp"
#include "compgen/error.hpp"
#include "compgen/features.hpp"
#include "compgen/nets.hpp"
#include "compgen/rng.hpp"
#include "compgen/tensor.hpp"
#include "compgen/valency.hpp"

namespace compgen {

// --- nearest neighbor ------------------------------------------------------

struct NearestHit {
    std::size_t index = 0;
    double distance = 0.0;
};

/// Exact Euclidean nearest row of `reference`; ties go to the lowest index.
/// Only the first `dims` columns take part (all columns when `dims` is 0).
inline NearestHit nearest(std::span<const double> x, const Tensor& reference, std::size_t dims = 0) {
    require(reference.rows() > 0, ErrorCode::EmptyReference, "reference set is empty");
    const std::size_t d = dims == 0 ? reference.cols() : dims;
    require(d <= reference.cols() && x.size() >= d && (dims != 0 || x.size() == reference.cols()),
            ErrorCode::DimensionMismatch,
            "query has " + std::to_string(x.size()) + " dims, reference has " + std::to_string(reference.cols()));
    NearestHit best{0, std::numeric_limits<double>::infinity()};
    double best_sq = std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < reference.rows(); ++r) {
        const auto row = reference.row_span(r);
        double sq = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
            const double diff = x[c] - row[c];
            sq += diff * diff;
        }
        if (sq < best_sq) {
            best_sq = sq;
            best.index = r;
        }
    }
    best.distance = std::sqrt(best_sq);
    return best;
}

// --- metrics ---------------------------------------------------------------

struct MeanStd {
    double mean = 0.0;
    double std = 0.0;
};

/// Population (ddof = 0) mean and standard deviation.
inline MeanStd mean_std(std::span<const double> v) {
    if (v.empty()) {
        return {};
    }
    double s = 0.0;
    for (double x : v) {
        s += x;
    }
    const double mean = s / static_cast<double>(v.size());
    double sq = 0.0;
    for (double x : v) {
        sq += (x - mean) * (x - mean);
    }
    return {mean, std::sqrt(sq / static_cast<double>(v.size()))};
}

struct ErrorMetrics {
    double mae = 0.0;
    double rmse = 0.0;
};

inline ErrorMetrics error_metrics(std::span<const double> truth, std::span<const double> estimate) {
    require(truth.size() == estimate.size(), ErrorCode::DimensionMismatch, "metric inputs differ in length");
    if (truth.empty()) {
        return {};
    }
    double abs_sum = 0.0;
    double sq_sum = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const double e = truth[i] - estimate[i];
        abs_sum += std::abs(e);
        sq_sum += e * e;
    }
    const double n = static_cast<double>(truth.size());
    ErrorMetrics m{abs_sum / n, std::sqrt(sq_sum / n)};
    // Jensen: mean |e| <= sqrt(mean e^2). Allow for rounding.
    require(m.mae <= m.rmse * (1.0 + 1e-12) + 1e-300, ErrorCode::InvalidArgument, "MAE exceeds RMSE");
    return m;
}

/// One generated sample scored against its nearest reference vector.
struct SampleRecord {
    std::size_t split = 0;
    double target_y = 0.0;
    std::string generated_composition;
    std::size_t nearest_index = 0;
    std::string nearest_composition;
    double near_y = 0.0;
    double distance = 0.0;
};

struct SplitMetrics {
    double mae = 0.0;
    double rmse = 0.0;
    /// Mean of distance / dim, times 1e3.
    double distance_x1e3 = 0.0;
    std::size_t count = 0;
};

inline SplitMetrics metrics_from_samples(std::span<const SampleRecord> samples, std::size_t dim) {
    std::vector<double> truth;
    std::vector<double> near;
    double dist = 0.0;
    for (const auto& s : samples) {
        truth.push_back(s.target_y);
        near.push_back(s.near_y);
        dist += s.distance / static_cast<double>(dim);
    }
    const ErrorMetrics e = error_metrics(truth, near);
    SplitMetrics m;
    m.mae = e.mae;
    m.rmse = e.rmse;
    m.distance_x1e3 = samples.empty() ? 0.0 : 1e3 * dist / static_cast<double>(samples.size());
    m.count = samples.size();
    return m;
}

/// Generated batch (n x dim) for one target property.
using GeneratorFn = std::function<Tensor(double y, std::size_t n, std::uint64_t seed)>;

/// Reference set the generated vectors are matched against.
struct ReferenceSet {
    Tensor vectors;  // normalized, same space as the generator output
    std::vector<double> y;
    std::vector<std::string> labels;  // e.g. formulas
};

struct GenerationOptions {
    std::size_t n_per_property = 256;
    std::uint64_t seed = 0;
    /// Bag-of-atoms slot count; used for rendering compositions and for the
    /// x^b-only metric slice of BP vectors.
    std::size_t b_dim = 0;
    std::vector<std::string> vocab;
    double th = 0.03;
    bool with_b_slice = false;
};

struct GenerationEval {
    SplitMetrics full;
    std::optional<SplitMetrics> b_slice;
    std::vector<SampleRecord> samples;
    std::vector<SampleRecord> b_slice_samples;
};

inline std::string render_generated(std::span<const double> x, const GenerationOptions& opt) {
    if (opt.vocab.empty()) {
        return "";
    }
    try {
        return format_composition(vector_to_composition(x.first(opt.vocab.size()), opt.vocab, opt.th));
    } catch (const Error& e) {
        if (e.code() == ErrorCode::NoSurvivingAtoms) {
            return "none";
        }
        throw;
    }
}

/// Generates `n_per_property` samples per target property and scores each
/// against its nearest reference vector.
inline GenerationEval eval_generation(const GeneratorFn& generate, std::span<const double> test_y,
                                      const ReferenceSet& ref, const GenerationOptions& opt,
                                      std::size_t split_index = 0) {
    require(ref.vectors.rows() > 0, ErrorCode::EmptyReference, "reference set is empty");
    require(ref.y.size() == ref.vectors.rows(), ErrorCode::DimensionMismatch, "reference properties misaligned");
    GenerationEval out;
    const std::size_t dim = ref.vectors.cols();
    for (std::size_t p = 0; p < test_y.size(); ++p) {
        const Tensor batch = generate(test_y[p], opt.n_per_property, mix_seed(opt.seed, p));
        require(batch.cols() == dim, ErrorCode::DimensionMismatch, "generator output width differs from reference");
        for (std::size_t r = 0; r < batch.rows(); ++r) {
            const auto x = batch.row_span(r);
            const std::string generated = render_generated(x, opt);
            auto record = [&](std::size_t dims) {
                const NearestHit hit = nearest(x, ref.vectors, dims);
                SampleRecord s;
                s.split = split_index;
                s.target_y = test_y[p];
                s.generated_composition = generated;
                s.nearest_index = hit.index;
                s.nearest_composition = ref.labels.empty() ? "" : ref.labels[hit.index];
                s.near_y = ref.y[hit.index];
                s.distance = hit.distance;
                return s;
            };
            out.samples.push_back(record(0));
            if (opt.with_b_slice) {
                out.b_slice_samples.push_back(record(opt.b_dim));
            }
        }
    }
    out.full = metrics_from_samples(out.samples, dim);
    if (opt.with_b_slice) {
        out.b_slice = metrics_from_samples(out.b_slice_samples, opt.b_dim);
    }
    return out;
}

// --- reports ---------------------------------------------------------------

struct EvalReport {
    std::string model_kind;
    std::string representation;
    std::string slice = "x";  // "x" (full vector) or "x^b"
    std::size_t dim = 0;
    std::vector<std::uint64_t> seeds;
    std::vector<SplitMetrics> splits;
    nlohmann::json config = nlohmann::json::object();

    MeanStd aggregate(double SplitMetrics::*field) const {
        std::vector<double> v;
        for (const auto& s : splits) {
            v.push_back(s.*field);
        }
        return mean_std(v);
    }
};

inline nlohmann::json to_json(const MeanStd& m) { return {{"mean", m.mean}, {"std", m.std}}; }

inline nlohmann::json to_json(const EvalReport& r) {
    nlohmann::json j;
    j["model_kind"] = r.model_kind;
    j["representation"] = r.representation;
    j["slice"] = r.slice;
    j["dim"] = r.dim;
    j["seeds"] = r.seeds;
    j["splits"] = nlohmann::json::array();
    for (const auto& s : r.splits) {
        j["splits"].push_back(
            {{"mae", s.mae}, {"rmse", s.rmse}, {"distance_x1e3", s.distance_x1e3}, {"count", s.count}});
    }
    j["aggregate"] = {{"mae", to_json(r.aggregate(&SplitMetrics::mae))},
                      {"rmse", to_json(r.aggregate(&SplitMetrics::rmse))},
                      {"distance_x1e3", to_json(r.aggregate(&SplitMetrics::distance_x1e3))}};
    j["config"] = r.config;
    return j;
}

inline constexpr std::string_view samples_header =
    "split,target_y,generated_composition,nearest_index,nearest_composition,near_y,distance";

inline std::string format_samples_csv(std::span<const SampleRecord> samples) {
    std::string out(samples_header);
    out += '\n';
    for (const auto& s : samples) {
        out += std::to_string(s.split) + "," + csv::format_double(s.target_y) + "," + s.generated_composition + "," +
               std::to_string(s.nearest_index) + "," + s.nearest_composition + "," + csv::format_double(s.near_y) +
               "," + csv::format_double(s.distance) + "\n";
    }
    return out;
}

inline std::vector<SampleRecord> read_samples_csv(const std::string& path) {
    const auto lines = csv::read_lines(path);
    require(!lines.empty() && lines[0] == samples_header, ErrorCode::IoError, "'" + path + "' is not a samples file");
    std::vector<SampleRecord> out;
    for (std::size_t ln = 1; ln < lines.size(); ++ln) {
        if (lines[ln].empty()) {
            continue;
        }
        const auto f = csv::split(lines[ln]);
        require(f.size() == 7, ErrorCode::IoError, path + ":" + std::to_string(ln + 1) + ": expected 7 fields");
        auto num = [&](const std::string& s) {
            auto v = csv::parse_double(s);
            require(v.has_value(), ErrorCode::IoError, path + ":" + std::to_string(ln + 1) + ": bad number");
            return *v;
        };
        SampleRecord s;
        s.split = static_cast<std::size_t>(num(f[0]));
        s.target_y = num(f[1]);
        s.generated_composition = f[2];
        s.nearest_index = static_cast<std::size_t>(num(f[3]));
        s.nearest_composition = f[4];
        s.near_y = num(f[5]);
        s.distance = num(f[6]);
        out.push_back(std::move(s));
    }
    return out;
}

/// Recomputes per-split metrics from persisted samples; the result must
/// equal the stored report exactly.
inline std::vector<SplitMetrics> recompute_splits(std::span<const SampleRecord> samples, std::size_t dim) {
    std::size_t max_split = 0;
    for (const auto& s : samples) {
        max_split = std::max(max_split, s.split);
    }
    std::vector<SplitMetrics> out;
    for (std::size_t k = 0; k <= max_split && !samples.empty(); ++k) {
        std::vector<SampleRecord> part;
        for (const auto& s : samples) {
            if (s.split == k) {
                part.push_back(s);
            }
        }
        out.push_back(metrics_from_samples(part, dim));
    }
    return out;
}

/// True when `report_json` matches a recomputation from `samples` bit for bit.
inline bool audit_report(const nlohmann::json& report_json, std::span<const SampleRecord> samples) {
    const std::size_t dim = report_json.at("dim").get<std::size_t>();
    const auto recomputed = recompute_splits(samples, dim);
    const auto& stored = report_json.at("splits");
    if (stored.size() != recomputed.size()) {
        return false;
    }
    EvalReport r;
    for (std::size_t k = 0; k < recomputed.size(); ++k) {
        const auto& s = stored[k];
        if (s.at("mae").get<double>() != recomputed[k].mae || s.at("rmse").get<double>() != recomputed[k].rmse ||
            s.at("distance_x1e3").get<double>() != recomputed[k].distance_x1e3 ||
            s.at("count").get<std::size_t>() != recomputed[k].count) {
            return false;
        }
        if (recomputed[k].mae > recomputed[k].rmse) {
            return false;
        }
        r.splits.push_back(recomputed[k]);
    }
    const auto agg = to_json(r).at("aggregate");
    return agg == report_json.at("aggregate");
}

// --- property predictors ---------------------------------------------------

using PredictorFn = std::function<std::vector<double>(const Tensor& x)>;

inline ErrorMetrics eval_predictor(const PredictorFn& predict, const Tensor& x, std::span<const double> y) {
    const auto p = predict(x);
    return error_metrics(y, p);
}

/// Regression MLP with the critic's layout ([30, 60] hidden, scalar output).
struct DnnBaseline {
    MlpSpec spec;
    MlpParams params;

    std::vector<double> predict(const Tensor& x) const {
        const Tensor out = mlp_apply(spec, params, x);
        return out.values();
    }
};

struct DnnTrainConfig {
    std::size_t batch_size = 256;
    std::size_t iterations = 50000;
    AdamConfig adam = AdamConfig::vae();
    std::uint64_t seed = 0;
};

inline nlohmann::json to_json(const DnnTrainConfig& c) {
    return {{"batch_size", c.batch_size}, {"iterations", c.iterations}, {"adam", to_json(c.adam)}, {"seed", c.seed}};
}

inline DnnTrainConfig dnn_config_from_json(const nlohmann::json& j, DnnTrainConfig c = {}) {
    c.batch_size = j.value("batch_size", c.batch_size);
    c.iterations = j.value("iterations", c.iterations);
    if (j.contains("adam")) {
        c.adam = adam_from_json(j.at("adam"), c.adam);
    }
    c.seed = j.value("seed", c.seed);
    return c;
}

inline DnnBaseline train_dnn_baseline(const Tensor& x, std::span<const double> y, const DnnTrainConfig& config) {
    require(x.rows() == y.size() && x.rows() > 0, ErrorCode::InvalidArgument,
            "features and properties must be non-empty and paired");
    DnnBaseline model;
    model.spec = {x.cols(), discriminator_hidden, 1, Activation::Relu, Activation::Identity};
    model.params = init_mlp(model.spec, mix_seed(config.seed, 21));
    const auto params = model.params.tensors();
    AdamState adam = make_adam(config.adam, params);
    Rng rng(mix_seed(config.seed, 22));
    for (std::size_t it = 0; it < config.iterations; ++it) {
        std::vector<std::size_t> idx(config.batch_size);
        for (auto& i : idx) {
            i = rng.index(x.rows());
        }
        Tensor target(idx.size(), 1);
        for (std::size_t i = 0; i < idx.size(); ++i) {
            target(i, 0) = y[idx[i]];
        }
        ad::Tape t;
        const MlpBinding b = bind(t, model.params, true);
        const ad::NodeId pred = mlp_forward(t, model.spec, b, t.constant(gather_rows(x, idx)));
        const ad::NodeId loss = t.mean(t.square(t.sub(pred, t.constant(target))));
        const auto grads = t.backward(loss, b.nodes());
        adam_step(params, grads, adam);
    }
    return model;
}

// --- valence repair evaluation ----------------------------------------------

/// Featurization context needed to place a repaired composition back into
/// the generator's normalized vector space.
struct VectorSpace {
    FeatureSchema schema;
    NormalizationStats stats;
    const DescriptorTable* descriptors = nullptr;
};

/// The raw vector with its active bag-of-atoms slots replaced by the repaired
/// fractions, rescaled to the raw active mass. For BP vectors the descriptor
/// slots are recomputed from the repaired composition.
inline std::vector<double> repaired_vector(std::span<const double> raw, const MhResult& mh, const VectorSpace& space) {
    std::vector<double> out(raw.begin(), raw.end());
    double mass = 0.0;
    for (std::size_t i : mh.active_indices) {
        mass += raw[i];
    }
    for (std::size_t d = 0; d < mh.active_indices.size(); ++d) {
        out[mh.active_indices[d]] = mh.fractions[d] * mass;
    }
    if (space.schema.representation == Representation::BP) {
        require(space.descriptors != nullptr, ErrorCode::InvalidArgument, "BP vectors need a descriptor table");
        FeatureVector xp = weighted_descriptors(mh.composition, *space.descriptors);
        const std::size_t b = space.schema.b_dim();
        for (std::size_t k = 0; k < xp.values.size(); ++k) {
            const double lo = space.stats.min[b + k];
            const double range = space.stats.max[b + k] - lo;
            out[b + k] = range > 0.0 ? (xp.values[k] - lo) / range : 0.0;
        }
    }
    return out;
}

struct MhEvalRow {
    double target_y = 0.0;
    std::string raw_composition;
    std::string modified_composition;
    double raw_net_valence = 0.0;
    double modified_net_valence = 0.0;
    bool balanced = false;
    std::size_t iterations = 0;
    double raw_near_y = 0.0;
    double modified_near_y = 0.0;
    double raw_distance = 0.0;
    double modified_distance = 0.0;
};

struct MhEvalSide {
    MeanStd net_valence;  // over samples
    MeanStd mae;          // over target properties
    MeanStd rmse;
    MeanStd distance_x1e3;
};

struct MhEvalReport {
    MhEvalSide raw;
    MhEvalSide modified;
    std::size_t unbalanced = 0;
    std::vector<MhEvalRow> rows;
};

inline nlohmann::json to_json(const MhEvalSide& s) {
    return {{"net_valence", to_json(s.net_valence)},
            {"mae", to_json(s.mae)},
            {"rmse", to_json(s.rmse)},
            {"distance_x1e3", to_json(s.distance_x1e3)}};
}

inline nlohmann::json to_json(const MhEvalReport& r) {
    return {{"raw", to_json(r.raw)},
            {"modified", to_json(r.modified)},
            {"unbalanced", r.unbalanced},
            {"samples", r.rows.size()}};
}

/// Scores a generated batch before and after valence repair. `batch` rows
/// pair with `target_y`. Rows with no surviving atoms are skipped.
inline MhEvalReport eval_mh(const Tensor& batch, std::span<const double> target_y, const VectorSpace& space,
                            const ValenceTable& table, const ReferenceSet& ref, const MhConfig& config) {
    require(batch.rows() == target_y.size(), ErrorCode::DimensionMismatch, "batch and targets misaligned");
    MhEvalReport report;
    const std::size_t dim = batch.cols();
    const auto& vocab = space.schema.element_vocab;
    for (std::size_t r = 0; r < batch.rows(); ++r) {
        const auto raw = batch.row_span(r);
        Composition raw_comp;
        try {
            raw_comp = vector_to_composition(raw.first(vocab.size()), vocab, config.th);
        } catch (const Error& e) {
            if (e.code() == ErrorCode::NoSurvivingAtoms) {
                continue;
            }
            throw;
        }
        MhConfig row_config = config;
        row_config.seed = mix_seed(config.seed, r);
        const MhResult mh = mh_modify(raw, vocab, row_config, table);
        const std::vector<double> modified = mh.iterations == 0 ? std::vector<double>(raw.begin(), raw.end())
                                                                 : repaired_vector(raw, mh, space);
        const NearestHit raw_hit = nearest(raw, ref.vectors);
        const NearestHit mod_hit = nearest(modified, ref.vectors);
        MhEvalRow row;
        row.target_y = target_y[r];
        row.raw_composition = format_composition(raw_comp);
        row.modified_composition = format_composition(mh.composition);
        row.raw_net_valence = net_valence(raw_comp, table, config.max_valence_combinations);
        row.modified_net_valence = net_valence(mh.composition, table, config.max_valence_combinations);
        row.balanced = mh.balanced;
        row.iterations = mh.iterations;
        row.raw_near_y = ref.y[raw_hit.index];
        row.modified_near_y = ref.y[mod_hit.index];
        row.raw_distance = raw_hit.distance;
        row.modified_distance = mod_hit.distance;
        report.unbalanced += mh.balanced ? 0 : 1;
        report.rows.push_back(std::move(row));
    }

    auto side = [&](bool modified) {
        MhEvalSide s;
        std::vector<double> valence;
        for (const auto& row : report.rows) {
            valence.push_back(modified ? row.modified_net_valence : row.raw_net_valence);
        }
        s.net_valence = mean_std(valence);
        // Group by target property, in first-appearance order.
        std::vector<double> targets;
        for (const auto& row : report.rows) {
            if (std::find(targets.begin(), targets.end(), row.target_y) == targets.end()) {
                targets.push_back(row.target_y);
            }
        }
        std::vector<double> maes, rmses, dists;
        for (double t : targets) {
            std::vector<double> truth, near;
            double d = 0.0;
            for (const auto& row : report.rows) {
                if (row.target_y == t) {
                    truth.push_back(t);
                    near.push_back(modified ? row.modified_near_y : row.raw_near_y);
                    d += (modified ? row.modified_distance : row.raw_distance) / static_cast<double>(dim);
                }
            }
            const ErrorMetrics e = error_metrics(truth, near);
            maes.push_back(e.mae);
            rmses.push_back(e.rmse);
            dists.push_back(1e3 * d / static_cast<double>(truth.size()));
        }
        s.mae = mean_std(maes);
        s.rmse = mean_std(rmses);
        s.distance_x1e3 = mean_std(dists);
        return s;
    };
    report.raw = side(false);
    report.modified = side(true);
    return report;
}

inline constexpr std::string_view mh_rows_header =
    "target_y,raw_composition,modified_composition,raw_net_valence,modified_net_valence,balanced,iterations,"
    "raw_near_y,modified_near_y,raw_distance,modified_distance";

inline std::string format_mh_rows_csv(std::span<const MhEvalRow> rows) {
    std::string out(mh_rows_header);
    out += '\n';
    for (const auto& r : rows) {
        out += csv::format_double(r.target_y) + "," + r.raw_composition + "," + r.modified_composition + "," +
               csv::format_double(r.raw_net_valence) + "," + csv::format_double(r.modified_net_valence) + "," +
               (r.balanced ? "1" : "0") + "," + std::to_string(r.iterations) + "," + csv::format_double(r.raw_near_y) +
               "," + csv::format_double(r.modified_near_y) + "," + csv::format_double(r.raw_distance) + "," +
               csv::format_double(r.modified_distance) + "\n";
    }
    return out;
}

// --- extrapolation -----------------------------------------------------------

struct PropertyRange {
    double lo = 0.0;
    double hi = 0.0;

    bool contains(double y) const { return y >= lo && y <= hi; }
};

struct ExtrapolationCurve {
    PropertyRange range;
    std::size_t training_records = 0;
    std::vector<double> probes;
    std::vector<double> rmse;
};

/// Builds a generator from training features and properties.
using TrainerFn = std::function<GeneratorFn(const Tensor& x, std::span<const double> y)>;

/// For each range: train on the rows of `train_x` whose property lies in the
/// range, generate at every probe, and report RMSE(y, near(y)) against the
/// unfiltered reference set.
inline std::vector<ExtrapolationCurve> extrapolation_sweep(const Tensor& train_x, std::span<const double> train_y,
                                                           std::span<const PropertyRange> ranges,
                                                           const TrainerFn& trainer, std::span<const double> probes,
                                                           const ReferenceSet& ref, std::size_t n_per_probe,
                                                           std::uint64_t seed) {
    require(train_x.rows() == train_y.size(), ErrorCode::DimensionMismatch, "training rows misaligned");
    std::vector<ExtrapolationCurve> curves;
    for (const auto& range : ranges) {
        require(range.lo <= range.hi, ErrorCode::InvalidArgument, "range lower bound exceeds upper bound");
        std::vector<std::size_t> keep;
        for (std::size_t i = 0; i < train_y.size(); ++i) {
            if (range.contains(train_y[i])) {
                keep.push_back(i);
            }
        }
        require(!keep.empty(), ErrorCode::InsufficientRecords,
                "no training records in [" + csv::format_double(range.lo) + ", " + csv::format_double(range.hi) + "]");
        const Tensor x = gather_rows(train_x, keep);
        std::vector<double> y;
        for (std::size_t i : keep) {
            y.push_back(train_y[i]);
        }
        const GeneratorFn generate = trainer(x, y);
        ExtrapolationCurve curve;
        curve.range = range;
        curve.training_records = keep.size();
        for (std::size_t p = 0; p < probes.size(); ++p) {
            GenerationOptions opt;
            opt.n_per_property = n_per_probe;
            opt.seed = mix_seed(seed, p);
            const auto eval = eval_generation(generate, probes.subspan(p, 1), ref, opt);
            curve.probes.push_back(probes[p]);
            curve.rmse.push_back(eval.full.rmse);
        }
        curves.push_back(std::move(curve));
    }
    return curves;
}

inline std::string format_curves_tsv(std::span<const ExtrapolationCurve> curves) {
    std::string out = "range_lo\trange_hi\tprobe_y\tinside_range\trmse\n";
    for (const auto& c : curves) {
        for (std::size_t i = 0; i < c.probes.size(); ++i) {
            out += csv::format_double(c.range.lo) + "\t" + csv::format_double(c.range.hi) + "\t" +
                   csv::format_double(c.probes[i]) + "\t" + (c.range.contains(c.probes[i]) ? "1" : "0") + "\t" +
                   csv::format_double(c.rmse[i]) + "\n";
        }
    }
    return out;
}

// --- histograms ----------------------------------------------------------------

struct BinSpec {
    double left = 0.0;
    double width = 1.0;
    std::size_t count = 1;
};

struct Histogram {
    BinSpec bins;
    std::vector<std::size_t> counts;
};

/// Bins are [left + k w, left + (k+1) w); the last bin also takes its right
/// edge. Values outside the bins are not counted.
inline Histogram histogram(std::span<const double> values, const BinSpec& bins) {
    require(bins.width > 0.0 && bins.count >= 1, ErrorCode::InvalidArgument, "bins need positive width and count");
    Histogram h{bins, std::vector<std::size_t>(bins.count, 0)};
    const double right = bins.left + bins.width * static_cast<double>(bins.count);
    for (double v : values) {
        require(std::isfinite(v), ErrorCode::NonFiniteValue, "histogram input is not finite");
        if (v < bins.left || v > right) {
            continue;
        }
        auto k = static_cast<std::size_t>(std::floor((v - bins.left) / bins.width));
        h.counts[std::min(k, bins.count - 1)] += 1;
    }
    return h;
}

/// `count` equal bins spanning [min, max] of `values` (unit bins at 0 when empty).
inline BinSpec bins_covering(std::span<const double> values, std::size_t count) {
    if (values.empty()) {
        return {0.0, 1.0, count};
    }
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    const double width = *hi > *lo ? (*hi - *lo) / static_cast<double>(count) : 1.0;
    return {*lo, width, count};
}

inline std::string format_histogram_tsv(const Histogram& h) {
    std::string out = "bin_left\tbin_right\tcount\n";
    for (std::size_t k = 0; k < h.counts.size(); ++k) {
        const double l = h.bins.left + h.bins.width * static_cast<double>(k);
        const double r = h.bins.left + h.bins.width * static_cast<double>(k + 1);
        out += csv::format_double(l) + "\t" + csv::format_double(r) + "\t" + std::to_string(h.counts[k]) + "\n";
    }
    return out;
}

inline Histogram emit_histogram(std::span<const double> values, const BinSpec& bins, const std::string& path) {
    Histogram h = histogram(values, bins);
    csv::write_text(path, format_histogram_tsv(h));
    return h;
}

} // namespace compgen
