#pragma once

/// @file
/// Composition featurization: bag-of-atoms counts, fraction-weighted
/// physical descriptors, their concatenation, min-max normalization, and the
/// conversion from a generated bag-of-atoms vector back to a composition.

#include <algorithm>
#include <cmath>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "compgen/csv.hpp"
#include "compgen/error.hpp"
#include "compgen/formula.hpp"
#include "compgen/tensor.hpp"

namespace compgen {

enum class Representation { B, BP };

inline std::string to_string(Representation r) { return r == Representation::B ? "b" : "bp"; }

inline Representation representation_from_string(std::string_view s) {
    if (s == "b") {
        return Representation::B;
    }
    if (s == "bp") {
        return Representation::BP;
    }
    fail(ErrorCode::ConfigError, "representation must be 'b' or 'bp', got '" + std::string(s) + "'");
}

struct FeatureSchema {
    std::vector<std::string> element_vocab;
    std::vector<std::string> descriptor_names;
    Representation representation = Representation::B;

    std::size_t b_dim() const { return element_vocab.size(); }
    std::size_t p_dim() const {
        return representation == Representation::BP ? descriptor_names.size() : 0;
    }
    std::size_t dim() const { return b_dim() + p_dim(); }

    /// Vocabulary slot of `symbol`, or npos.
    std::size_t index_of(std::string_view symbol) const {
        auto it = std::find(element_vocab.begin(), element_vocab.end(), symbol);
        return it == element_vocab.end() ? npos : static_cast<std::size_t>(it - element_vocab.begin());
    }

    static constexpr std::size_t npos = static_cast<std::size_t>(-1);
};

/// Per-element physical descriptor rows.
struct DescriptorTable {
    std::vector<std::string> names;
    std::map<std::string, std::vector<double>> rows;

    const std::vector<double>& row(const std::string& symbol) const {
        auto it = rows.find(symbol);
        if (it == rows.end()) {
            fail(ErrorCode::MissingDescriptorRow, "no descriptor row for '" + symbol + "'");
        }
        return it->second;
    }
};

struct NormalizationStats {
    std::vector<double> min;
    std::vector<double> max;

    std::size_t dim() const { return min.size(); }
};

/// A featurized composition. `b_dim` leading slots are bag-of-atoms,
/// the following `p_dim` slots are descriptors.
struct FeatureVector {
    std::vector<double> values;
    std::size_t b_dim = 0;
    std::size_t p_dim = 0;
    bool normalized = false;

    std::size_t size() const { return values.size(); }
};

/// Loads `element,<descriptor names...>`. Missing or non-numeric cells are
/// rejected rather than imputed.
inline DescriptorTable load_descriptor_table(const std::string& path) {
    const auto lines = csv::read_lines(path);
    require(!lines.empty(), ErrorCode::IoError, "descriptor table '" + path + "' is empty");
    const auto header = csv::split(lines[0]);
    require(header.size() >= 2 && header[0] == "element", ErrorCode::IoError,
            "descriptor table header must start with 'element'");
    DescriptorTable table;
    table.names.assign(header.begin() + 1, header.end());
    for (std::size_t ln = 1; ln < lines.size(); ++ln) {
        if (csv::trim(lines[ln]).empty()) {
            continue;
        }
        const auto fields = csv::split(lines[ln]);
        const std::string where = path + ":" + std::to_string(ln + 1);
        require(fields.size() == header.size(), ErrorCode::MissingDescriptorRow,
                where + ": expected " + std::to_string(header.size()) + " fields, got " +
                    std::to_string(fields.size()));
        require(is_element(fields[0]), ErrorCode::UnknownElement, where + ": '" + fields[0] + "'");
        require(!table.rows.contains(fields[0]), ErrorCode::InvalidArgument,
                where + ": duplicate row for '" + fields[0] + "'");
        std::vector<double> row;
        row.reserve(table.names.size());
        for (std::size_t i = 1; i < fields.size(); ++i) {
            auto v = csv::parse_double(fields[i]);
            require(v.has_value(), ErrorCode::MissingDescriptorRow,
                    where + ": missing or malformed value for '" + table.names[i - 1] + "'");
            require(std::isfinite(*v), ErrorCode::NonFiniteValue,
                    where + ": non-finite value for '" + table.names[i - 1] + "'");
            row.push_back(*v);
        }
        table.rows.emplace(fields[0], std::move(row));
    }
    return table;
}

/// x^b: raw atom counts over the schema vocabulary.
inline FeatureVector bag_of_atoms(const Composition& c, const FeatureSchema& schema) {
    FeatureVector out;
    out.values.assign(schema.b_dim(), 0.0);
    out.b_dim = schema.b_dim();
    for (const auto& [sym, n] : c) {
        const std::size_t i = schema.index_of(sym);
        require(i != FeatureSchema::npos, ErrorCode::ElementOutsideVocabulary,
                "'" + sym + "' is not in the element vocabulary");
        out.values[i] += n;
    }
    return out;
}

/// x^p: atomic-fraction-weighted mean of descriptor rows.
inline FeatureVector weighted_descriptors(const Composition& c, const DescriptorTable& table) {
    const Composition fractions = normalize_fractions(c);
    FeatureVector out;
    out.values.assign(table.names.size(), 0.0);
    out.p_dim = table.names.size();
    for (const auto& [sym, f] : fractions) {
        const auto& row = table.row(sym);
        for (std::size_t i = 0; i < row.size(); ++i) {
            out.values[i] += f * row[i];
        }
    }
    return out;
}

/// x^bp = [x^b, x^p].
inline FeatureVector concat_bp(const FeatureVector& xb, const FeatureVector& xp) {
    require(xb.b_dim > 0 && xb.p_dim == 0 && xb.values.size() == xb.b_dim, ErrorCode::SchemaMismatch,
            "first operand must be a non-empty bag-of-atoms vector");
    require(xp.b_dim == 0 && xp.values.size() == xp.p_dim, ErrorCode::SchemaMismatch,
            "second operand must be a descriptor vector");
    require(xb.normalized == xp.normalized, ErrorCode::SchemaMismatch, "normalization state differs");
    FeatureVector out;
    out.values = xb.values;
    out.values.insert(out.values.end(), xp.values.begin(), xp.values.end());
    out.b_dim = xb.b_dim;
    out.p_dim = xp.p_dim;
    out.normalized = xb.normalized;
    return out;
}

/// Featurizes one composition according to `schema`; `table` is required for BP.
inline FeatureVector featurize(const Composition& c, const FeatureSchema& schema,
                               const DescriptorTable* table) {
    FeatureVector xb = bag_of_atoms(c, schema);
    if (schema.representation == Representation::B) {
        return xb;
    }
    require(table != nullptr, ErrorCode::InvalidArgument, "BP featurization needs a descriptor table");
    require(table->names == schema.descriptor_names, ErrorCode::SchemaMismatch,
            "descriptor table columns differ from schema");
    return concat_bp(xb, weighted_descriptors(c, *table));
}

inline NormalizationStats fit_minmax(const Tensor& rows) {
    require(rows.rows() > 0, ErrorCode::EmptyInput, "fit_minmax needs at least one vector");
    NormalizationStats stats;
    stats.min.assign(rows.row_span(0).begin(), rows.row_span(0).end());
    stats.max = stats.min;
    for (std::size_t r = 1; r < rows.rows(); ++r) {
        auto row = rows.row_span(r);
        for (std::size_t c = 0; c < row.size(); ++c) {
            stats.min[c] = std::min(stats.min[c], row[c]);
            stats.max[c] = std::max(stats.max[c], row[c]);
        }
    }
    return stats;
}

inline NormalizationStats fit_minmax(std::span<const FeatureVector> vectors) {
    require(!vectors.empty(), ErrorCode::EmptyInput, "fit_minmax needs at least one vector");
    const std::size_t dim = vectors.front().size();
    Tensor rows(vectors.size(), dim);
    for (std::size_t r = 0; r < vectors.size(); ++r) {
        require(vectors[r].size() == dim, ErrorCode::DimensionMismatch, "inconsistent vector lengths");
        std::copy(vectors[r].values.begin(), vectors[r].values.end(), rows.row_span(r).begin());
    }
    return fit_minmax(rows);
}

/// (v - min) / (max - min); constant dimensions map to 0.
inline void apply_minmax_inplace(std::span<double> v, const NormalizationStats& stats) {
    require(v.size() == stats.dim(), ErrorCode::DimensionMismatch,
            "vector has " + std::to_string(v.size()) + " dims, stats have " + std::to_string(stats.dim()));
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double range = stats.max[i] - stats.min[i];
        v[i] = range > 0.0 ? (v[i] - stats.min[i]) / range : 0.0;
    }
}

inline void invert_minmax_inplace(std::span<double> v, const NormalizationStats& stats) {
    require(v.size() == stats.dim(), ErrorCode::DimensionMismatch,
            "vector has " + std::to_string(v.size()) + " dims, stats have " + std::to_string(stats.dim()));
    for (std::size_t i = 0; i < v.size(); ++i) {
        v[i] = stats.min[i] + v[i] * (stats.max[i] - stats.min[i]);
    }
}

inline FeatureVector apply_minmax(FeatureVector v, const NormalizationStats& stats) {
    apply_minmax_inplace(v.values, stats);
    v.normalized = true;
    return v;
}

inline FeatureVector invert_minmax(FeatureVector v, const NormalizationStats& stats) {
    invert_minmax_inplace(v.values, stats);
    v.normalized = false;
    return v;
}

inline Tensor apply_minmax(Tensor rows, const NormalizationStats& stats) {
    for (std::size_t r = 0; r < rows.rows(); ++r) {
        apply_minmax_inplace(rows.row_span(r), stats);
    }
    return rows;
}

/// Keeps vocabulary slots whose normalized value exceeds `th` and rescales
/// the survivors to sum to one.
inline Composition vector_to_composition(std::span<const double> xb,
                                         std::span<const std::string> vocab, double th) {
    require(xb.size() >= vocab.size(), ErrorCode::DimensionMismatch,
            "vector shorter than the element vocabulary");
    require(th > 0.0 && th < 1.0, ErrorCode::InvalidArgument, "threshold must lie in (0, 1)");
    double total = 0.0;
    for (std::size_t i = 0; i < vocab.size(); ++i) {
        if (xb[i] > th) {
            total += xb[i];
        }
    }
    require(total > 0.0, ErrorCode::NoSurvivingAtoms,
            "no bag-of-atoms entry exceeds threshold " + csv::format_double(th));
    Composition out;
    for (std::size_t i = 0; i < vocab.size(); ++i) {
        if (xb[i] > th) {
            out.add(vocab[i], xb[i] / total);
        }
    }
    out.set_fractional(true);
    return out;
}

} // namespace compgen
