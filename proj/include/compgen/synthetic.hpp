#pragma once

/// @file
/// Desk-scale benchmark with a known composition -> property map.
///
/// Four elements (Li, O, Fe, La) stand in for the periodic table. Each
/// record has 2-4 of them with integer counts in [1, 12]; its property is an
/// affine function of the atomic fractions plus small Gaussian noise. The
/// descriptor table and valence table are synthetic as well.

#include <array>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "compgen/dataset.hpp"
#include "compgen/features.hpp"
#include "compgen/formula.hpp"
#include "compgen/rng.hpp"
#include "compgen/valency.hpp"

namespace compgen {

struct SyntheticBenchmark {
    std::vector<DatasetRecord> records;
    DescriptorTable descriptors;
    ValenceTable valences;
};

inline constexpr std::array<const char*, 4> synthetic_elements{"Li", "O", "Fe", "La"};
inline constexpr std::array<double, 4> synthetic_coefficients{-1.0, -0.2, 0.3, 0.6};
inline constexpr double synthetic_intercept = 0.0;
inline constexpr double synthetic_noise = 0.01;

/// Noise-free property of a composition over the synthetic elements.
inline double synthetic_property(const Composition& c) {
    const Composition f = normalize_fractions(c);
    double y = synthetic_intercept;
    for (std::size_t i = 0; i < synthetic_elements.size(); ++i) {
        y += synthetic_coefficients[i] * f.count(synthetic_elements[i]);
    }
    return y;
}

inline DescriptorTable synthetic_descriptor_table() {
    DescriptorTable t;
    t.names = {"coefficient", "pseudo_radius", "pseudo_electronegativity"};
    const std::array<std::array<double, 3>, 4> rows{{{synthetic_coefficients[0], 1.52, 0.98},
                                                     {synthetic_coefficients[1], 0.66, 3.44},
                                                     {synthetic_coefficients[2], 1.26, 1.83},
                                                     {synthetic_coefficients[3], 1.87, 1.10}}};
    for (std::size_t i = 0; i < synthetic_elements.size(); ++i) {
        t.rows[synthetic_elements[i]] = {rows[i].begin(), rows[i].end()};
    }
    return t;
}

inline ValenceTable synthetic_valence_table() {
    ValenceTable t;
    t.set("Li", {1});
    t.set("O", {-2});
    t.set("Fe", {2, 3});
    t.set("La", {3});
    return t;
}

/// `n` records with pairwise-distinct normalized compositions.
inline SyntheticBenchmark make_synthetic_benchmark(std::size_t n, std::uint64_t seed) {
    SyntheticBenchmark bench;
    bench.descriptors = synthetic_descriptor_table();
    bench.valences = synthetic_valence_table();
    Rng rng(seed);
    std::set<std::vector<std::int64_t>> seen;
    std::size_t attempts = 0;
    while (bench.records.size() < n) {
        require(++attempts < 100 * n + 1000, ErrorCode::InvalidArgument,
                "cannot draw " + std::to_string(n) + " distinct synthetic compositions");
        std::array<int, 4> counts{};
        std::size_t present = 0;
        for (auto& c : counts) {
            if (rng.uniform() < 0.7) {
                c = 1 + static_cast<int>(rng.index(12));
                ++present;
            }
        }
        if (present < 2) {
            continue;
        }
        Composition comp;
        int total = 0;
        for (std::size_t i = 0; i < counts.size(); ++i) {
            if (counts[i] > 0) {
                comp.add(synthetic_elements[i], counts[i]);
                total += counts[i];
            }
        }
        // Fraction key at 1e-9 resolution; distinct keys are distinct compositions.
        std::vector<std::int64_t> key;
        for (int c : counts) {
            key.push_back(std::llround(1e9 * c / total));
        }
        if (!seen.insert(key).second) {
            continue;
        }
        DatasetRecord rec;
        rec.formula = format_counts(comp);
        rec.composition = parse_formula(rec.formula);
        rec.y = synthetic_property(comp) + rng.normal(0.0, synthetic_noise);
        bench.records.push_back(std::move(rec));
    }
    return bench;
}

} // namespace compgen
