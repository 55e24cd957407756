#pragma once

/// @file
/// Dataset ingestion, deduplication, vocabulary construction and
/// reproducible train/test splitting.

#include <algorithm>
#include <cmath>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "compgen/csv.hpp"
#include "compgen/error.hpp"
#include "compgen/features.hpp"
#include "compgen/formula.hpp"
#include "compgen/rng.hpp"

namespace compgen {

inline constexpr std::string_view dataset_header = "formula,formation_energy_ev_per_atom";

struct DatasetRecord {
    std::string formula;
    Composition composition;
    double y = 0.0;  // formation energy, eV/atom
};

struct RowError {
    std::size_t line = 0;
    ErrorCode code = ErrorCode::FormulaParseError;
    std::string message;
};

struct LoadResult {
    std::vector<DatasetRecord> records;
    std::vector<RowError> errors;
};

/// Reads `formula,formation_energy_ev_per_atom` rows. With `fail_fast` the
/// first malformed row throws; otherwise malformed rows are collected.
inline LoadResult load_dataset(const std::string& path, bool fail_fast = true) {
    const auto lines = csv::read_lines(path);
    LoadResult result;
    std::size_t first = 0;
    while (first < lines.size() && csv::trim(lines[first]).empty()) {
        ++first;
    }
    if (first == lines.size()) {
        return result;
    }
    if (csv::trim(lines[first]) == dataset_header) {
        ++first;
    }
    for (std::size_t ln = first; ln < lines.size(); ++ln) {
        if (csv::trim(lines[ln]).empty()) {
            continue;
        }
        const std::size_t line_no = ln + 1;
        auto report = [&](ErrorCode code, const std::string& msg) {
            const std::string text = path + ":" + std::to_string(line_no) + ": " + msg;
            if (fail_fast) {
                fail(code, text);
            }
            result.errors.push_back({line_no, code, text});
        };
        const auto fields = csv::split(lines[ln]);
        if (fields.size() != 2) {
            report(ErrorCode::FormulaParseError, "expected 2 fields, got " + std::to_string(fields.size()));
            continue;
        }
        DatasetRecord rec;
        rec.formula = fields[0];
        try {
            rec.composition = parse_formula(fields[0]);
        } catch (const Error& e) {
            report(ErrorCode::FormulaParseError, e.what());
            continue;
        }
        auto y = csv::parse_double(fields[1]);
        if (!y || !std::isfinite(*y)) {
            report(ErrorCode::NonFiniteProperty, "property '" + fields[1] + "' is not a finite number");
            continue;
        }
        rec.y = *y;
        result.records.push_back(std::move(rec));
    }
    return result;
}

inline void write_dataset(const std::string& path, std::span<const DatasetRecord> records) {
    std::string text(dataset_header);
    text += '\n';
    for (const auto& r : records) {
        text += r.formula + "," + csv::format_double(r.y) + "\n";
    }
    csv::write_text(path, text);
}

namespace detail {

inline bool same_fractions(const Composition& a, const Composition& b, double tol) {
    if (a.size() != b.size()) {
        return false;
    }
    for (const auto& [sym, f] : a) {
        if (!b.contains(sym) || std::abs(b.count(sym) - f) > tol) {
            return false;
        }
    }
    return true;
}

inline std::string element_set_key(const Composition& c) {
    std::vector<int> z;
    for (const auto& e : c) {
        z.push_back(detail::atomic_number_or_throw(e.first));
    }
    std::sort(z.begin(), z.end());
    std::string key;
    for (int v : z) {
        key += std::to_string(v) + ".";
    }
    return key;
}

} // namespace detail

using WarningSink = std::function<void(const std::string&)>;

inline void warn_to_stderr(const std::string& msg) { std::cerr << "warning: " << msg << "\n"; }

/// Drops records whose normalized fractions match an earlier record within
/// 1e-6 per element. The first occurrence wins; conflicting properties are
/// reported to `warn`.
inline std::vector<DatasetRecord> deduplicate(std::span<const DatasetRecord> records,
                                              const WarningSink& warn = warn_to_stderr) {
    constexpr double tol = 1e-6;
    std::vector<DatasetRecord> kept;
    std::vector<Composition> kept_fractions;
    std::map<std::string, std::vector<std::size_t>> buckets;
    for (const auto& rec : records) {
        Composition fractions = normalize_fractions(rec.composition);
        auto& bucket = buckets[detail::element_set_key(fractions)];
        bool duplicate = false;
        for (std::size_t k : bucket) {
            if (detail::same_fractions(fractions, kept_fractions[k], tol)) {
                duplicate = true;
                if (kept[k].y != rec.y && warn) {
                    warn("duplicate composition '" + rec.formula + "' (y=" + csv::format_double(rec.y) +
                         ") conflicts with '" + kept[k].formula + "' (y=" + csv::format_double(kept[k].y) +
                         "); keeping the first");
                }
                break;
            }
        }
        if (!duplicate) {
            bucket.push_back(kept.size());
            kept.push_back(rec);
            kept_fractions.push_back(std::move(fractions));
        }
    }
    return kept;
}

/// Every element present in `records`, ordered by atomic number.
inline std::vector<std::string> build_vocab(std::span<const DatasetRecord> records) {
    std::vector<int> numbers;
    for (const auto& rec : records) {
        for (const auto& e : rec.composition) {
            numbers.push_back(detail::atomic_number_or_throw(e.first));
        }
    }
    std::sort(numbers.begin(), numbers.end());
    numbers.erase(std::unique(numbers.begin(), numbers.end()), numbers.end());
    std::vector<std::string> vocab;
    for (int z : numbers) {
        vocab.emplace_back(element_symbols[static_cast<std::size_t>(z - 1)]);
    }
    return vocab;
}

struct SplitSpec {
    std::uint64_t seed = 0;
    std::size_t train_count = 0;
    std::size_t test_count = 0;
    std::size_t repeats = 3;
    /// Applied to the training side only, after the random split.
    std::optional<std::pair<double, double>> y_range;
};

/// Record indices of one repeat.
struct SplitIndices {
    std::uint64_t seed = 0;
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

/// One split per repeat, seeded with `seed + repeat`.
inline std::vector<SplitIndices> split_indices(std::span<const DatasetRecord> records, const SplitSpec& spec) {
    require(spec.repeats >= 1, ErrorCode::InvalidArgument, "repeats must be >= 1");
    require(spec.train_count + spec.test_count <= records.size(), ErrorCode::InsufficientRecords,
            "requested " + std::to_string(spec.train_count) + " train + " + std::to_string(spec.test_count) +
                " test records from " + std::to_string(records.size()));
    std::vector<SplitIndices> out;
    for (std::size_t r = 0; r < spec.repeats; ++r) {
        SplitIndices s;
        s.seed = spec.seed + r;
        std::vector<std::size_t> order(records.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng rng(s.seed);
        rng.shuffle(std::span<std::size_t>(order));
        s.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(spec.train_count));
        s.test.assign(order.begin() + static_cast<std::ptrdiff_t>(spec.train_count),
                      order.begin() + static_cast<std::ptrdiff_t>(spec.train_count + spec.test_count));
        if (spec.y_range) {
            const auto [lo, hi] = *spec.y_range;
            std::erase_if(s.train, [&](std::size_t i) { return records[i].y < lo || records[i].y > hi; });
        }
        require(!s.train.empty(), ErrorCode::InsufficientRecords, "training split is empty after filtering");
        out.push_back(std::move(s));
    }
    return out;
}

struct Split {
    std::vector<DatasetRecord> train;
    std::vector<DatasetRecord> test;
};

inline std::vector<DatasetRecord> select(std::span<const DatasetRecord> records,
                                         std::span<const std::size_t> indices) {
    std::vector<DatasetRecord> out;
    out.reserve(indices.size());
    for (std::size_t i : indices) {
        out.push_back(records[i]);
    }
    return out;
}

inline std::vector<Split> split(std::span<const DatasetRecord> records, const SplitSpec& spec) {
    std::vector<Split> out;
    for (const auto& s : split_indices(records, spec)) {
        out.push_back({select(records, s.train), select(records, s.test)});
    }
    return out;
}

/// Split manifest for exact replay.
inline nlohmann::json split_manifest(const SplitSpec& spec, std::span<const SplitIndices> splits) {
    nlohmann::json j;
    j["seed"] = spec.seed;
    j["train_count"] = spec.train_count;
    j["test_count"] = spec.test_count;
    j["repeats"] = spec.repeats;
    j["y_range"] = spec.y_range ? nlohmann::json::array({spec.y_range->first, spec.y_range->second})
                                : nlohmann::json(nullptr);
    j["splits"] = nlohmann::json::array();
    for (const auto& s : splits) {
        j["splits"].push_back({{"seed", s.seed}, {"train", s.train}, {"test", s.test}});
    }
    return j;
}

/// Featurizes records into an n x dim matrix (raw, not normalized).
inline Tensor feature_matrix(std::span<const DatasetRecord> records, const FeatureSchema& schema,
                             const DescriptorTable* table) {
    Tensor out(records.size(), schema.dim());
    for (std::size_t r = 0; r < records.size(); ++r) {
        const FeatureVector v = featurize(records[r].composition, schema, table);
        std::copy(v.values.begin(), v.values.end(), out.row_span(r).begin());
    }
    return out;
}

inline std::vector<double> properties(std::span<const DatasetRecord> records) {
    std::vector<double> y;
    y.reserve(records.size());
    for (const auto& r : records) {
        y.push_back(r.y);
    }
    return y;
}

} // namespace compgen
