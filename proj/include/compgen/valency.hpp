#pragma once

/// @file
/// Metropolis-Hastings repair of generated bag-of-atoms vectors toward zero
/// net valence, and net-valence scoring.
///
/// The target is pi(x) = max_v exp(-(v . x)^2) over all assignments v of one
/// oxidation state per active element. The chain runs only over elements
/// whose generated value exceeds the threshold, draws `n_proposals` Gaussian
/// perturbations per step, and accepts the best-scoring candidate with
/// probability max_j alpha_j.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "compgen/csv.hpp"
#include "compgen/error.hpp"
#include "compgen/formula.hpp"
#include "compgen/rng.hpp"

namespace compgen {

/// element -> admissible oxidation states
struct ValenceTable {
    std::map<std::string, std::vector<int>> states;

    const std::vector<int>& at(const std::string& symbol) const {
        auto it = states.find(symbol);
        if (it == states.end()) {
            fail(ErrorCode::InvalidArgument, "valence table has no entry for '" + symbol + "'");
        }
        return it->second;
    }

    void set(const std::string& symbol, std::vector<int> values) {
        require(is_element(symbol), ErrorCode::UnknownElement, "'" + symbol + "'");
        require(!values.empty(), ErrorCode::InvalidArgument, "empty oxidation state list for '" + symbol + "'");
        for (int v : values) {
            require(v >= -4 && v <= 8, ErrorCode::InvalidArgument,
                    "oxidation state " + std::to_string(v) + " of '" + symbol + "' outside [-4, 8]");
        }
        states[symbol] = std::move(values);
    }
};

/// Reads `element,oxidation_states` with `;`-separated states, e.g. `Fe,2;3`.
inline ValenceTable load_valence_table(const std::string& path) {
    const auto lines = csv::read_lines(path);
    require(!lines.empty() && csv::trim(lines[0]) == "element,oxidation_states", ErrorCode::IoError,
            "valence table '" + path + "' must start with header 'element,oxidation_states'");
    ValenceTable table;
    for (std::size_t ln = 1; ln < lines.size(); ++ln) {
        if (csv::trim(lines[ln]).empty()) {
            continue;
        }
        const std::string where = path + ":" + std::to_string(ln + 1);
        const auto fields = csv::split(lines[ln]);
        require(fields.size() == 2, ErrorCode::IoError, where + ": expected 2 fields");
        std::vector<int> values;
        for (const auto& s : csv::split(fields[1], ';')) {
            auto v = csv::parse_int(s);
            require(v.has_value(), ErrorCode::IoError, where + ": malformed oxidation state '" + s + "'");
            values.push_back(static_cast<int>(*v));
        }
        table.set(fields[0], std::move(values));
    }
    return table;
}

inline std::string format_valence_table(const ValenceTable& table) {
    std::string out = "element,oxidation_states\n";
    for (const auto& [sym, values] : table.states) {
        out += sym + ",";
        for (std::size_t i = 0; i < values.size(); ++i) {
            out += (i ? ";" : "") + std::to_string(values[i]);
        }
        out += "\n";
    }
    return out;
}

struct MhConfig {
    double th = 0.03;
    std::size_t n_proposals = 100;
    double proposal_sigma = 0.02;
    std::size_t max_iterations = 2000;
    double valence_tolerance = 0.01;
    std::size_t max_valence_combinations = 4096;
    std::uint64_t seed = 0;

    void validate() const {
        require(th > 0.0 && th < 1.0, ErrorCode::ConfigError, "th must lie in (0, 1)");
        require(n_proposals >= 1, ErrorCode::ConfigError, "n_proposals must be >= 1");
        require(proposal_sigma > 0.0, ErrorCode::ConfigError, "proposal_sigma must be > 0");
        require(valence_tolerance > 0.0, ErrorCode::ConfigError, "valence_tolerance must be > 0");
    }
};

inline nlohmann::json to_json(const MhConfig& c) {
    return {{"th", c.th},
            {"n_proposals", c.n_proposals},
            {"proposal_sigma", c.proposal_sigma},
            {"max_iterations", c.max_iterations},
            {"valence_tolerance", c.valence_tolerance},
            {"max_valence_combinations", c.max_valence_combinations},
            {"seed", c.seed}};
}

inline MhConfig mh_config_from_json(const nlohmann::json& j, MhConfig c = {}) {
    c.th = j.value("th", c.th);
    c.n_proposals = j.value("n_proposals", c.n_proposals);
    c.proposal_sigma = j.value("proposal_sigma", c.proposal_sigma);
    c.max_iterations = j.value("max_iterations", c.max_iterations);
    c.valence_tolerance = j.value("valence_tolerance", c.valence_tolerance);
    c.max_valence_combinations = j.value("max_valence_combinations", c.max_valence_combinations);
    c.seed = j.value("seed", c.seed);
    c.validate();
    return c;
}

struct Compressed {
    std::vector<std::size_t> indices;
    std::vector<double> fractions;
};

/// Keeps entries strictly above `th` and rescales them to sum to one.
inline Compressed compress(std::span<const double> xb, double th) {
    Compressed out;
    double total = 0.0;
    for (std::size_t i = 0; i < xb.size(); ++i) {
        if (xb[i] > th) {
            out.indices.push_back(i);
            total += xb[i];
        }
    }
    require(total > 0.0, ErrorCode::NoSurvivingAtoms, "no entry exceeds threshold " + csv::format_double(th));
    for (std::size_t i : out.indices) {
        out.fractions.push_back(xb[i] / total);
    }
    return out;
}

using ValenceSets = std::vector<std::vector<int>>;

struct ChargeBalance {
    double min_abs_charge = 0.0;  // min over assignments of |v . x|
    std::vector<int> assignment;
};

/// Exhaustive search over the cartesian product of oxidation-state sets.
inline ChargeBalance best_assignment(std::span<const double> fractions, const ValenceSets& sets,
                                     std::size_t max_combinations = 4096) {
    require(fractions.size() == sets.size(), ErrorCode::DimensionMismatch,
            "one valence set per active element is required");
    std::size_t combos = 1;
    for (const auto& s : sets) {
        require(!s.empty(), ErrorCode::InvalidArgument, "empty valence set");
        if (combos > max_combinations / s.size() + 1) {
            combos = max_combinations + 1;
            break;
        }
        combos *= s.size();
    }
    require(combos <= max_combinations, ErrorCode::CombinationLimitExceeded,
            "valence assignments exceed the limit of " + std::to_string(max_combinations));

    ChargeBalance best{std::numeric_limits<double>::infinity(), {}};
    std::vector<std::size_t> pick(sets.size(), 0);
    std::vector<int> v(sets.size());
    while (true) {
        double charge = 0.0;
        for (std::size_t i = 0; i < sets.size(); ++i) {
            v[i] = sets[i][pick[i]];
            charge += v[i] * fractions[i];
        }
        if (std::abs(charge) < best.min_abs_charge) {
            best.min_abs_charge = std::abs(charge);
            best.assignment = v;
        }
        std::size_t k = 0;
        while (k < sets.size() && ++pick[k] == sets[k].size()) {
            pick[k] = 0;
            ++k;
        }
        if (k == sets.size()) {
            break;
        }
    }
    return best;
}

/// max over assignments of exp(-(v . x)^2).
inline double pi(std::span<const double> fractions, const ValenceSets& sets,
                 std::size_t max_combinations = 4096) {
    const double m = best_assignment(fractions, sets, max_combinations).min_abs_charge;
    return std::exp(-m * m);
}

/// Isotropic Gaussian proposal density, used in the MH ratio.
struct GaussianProposal {
    double sigma = 0.02;

    double log_density(std::span<const double> to, std::span<const double> from) const {
        double sq = 0.0;
        for (std::size_t i = 0; i < to.size(); ++i) {
            const double d = to[i] - from[i];
            sq += d * d;
        }
        const double n = static_cast<double>(to.size());
        return -0.5 * sq / (sigma * sigma) - n * std::log(sigma * std::sqrt(2.0 * std::numbers::pi));
    }
};

/// min(1, q(x | x_new) pi(x_new) / (q(x_new | x) pi(x))), in log space.
inline double acceptance_from_log(double log_pi_x, double log_pi_new, double log_q_forward, double log_q_reverse) {
    const double log_ratio = log_q_reverse + log_pi_new - log_q_forward - log_pi_x;
    return log_ratio >= 0.0 ? 1.0 : std::exp(log_ratio);
}

inline double acceptance(std::span<const double> x, std::span<const double> x_new, const ValenceSets& sets,
                         const GaussianProposal& proposal, std::size_t max_combinations = 4096) {
    const double mx = best_assignment(x, sets, max_combinations).min_abs_charge;
    const double mn = best_assignment(x_new, sets, max_combinations).min_abs_charge;
    return acceptance_from_log(-mx * mx, -mn * mn, proposal.log_density(x_new, x), proposal.log_density(x, x_new));
}

struct MhStep {
    std::size_t iteration = 0;
    double pi_current = 0.0;
    double best_alpha = 0.0;
    bool accepted = false;
    double net_charge = 0.0;  // min |v . x| after the step
    std::vector<double> fractions;
};

struct MhResult {
    Composition composition;
    std::vector<std::size_t> active_indices;
    std::vector<double> fractions;  // final, aligned with active_indices
    double initial_net_valence = 0.0;
    double final_net_valence = 0.0;
    std::size_t iterations = 0;
    bool balanced = false;
    std::vector<MhStep> trace;
};

inline ValenceSets valence_sets_for(std::span<const std::size_t> indices, std::span<const std::string> vocab,
                                    const ValenceTable& table) {
    ValenceSets sets;
    for (std::size_t i : indices) {
        sets.push_back(table.at(vocab[i]));
    }
    return sets;
}

/// Runs the valence-repair chain on the bag-of-atoms slots `xb` (normalized
/// space, aligned with `vocab`). When the chain exhausts `max_iterations`
/// without balancing, the best state visited is returned with
/// `balanced == false`.
inline MhResult mh_modify(std::span<const double> xb, std::span<const std::string> vocab, const MhConfig& config,
                          const ValenceTable& table) {
    config.validate();
    require(xb.size() >= vocab.size(), ErrorCode::DimensionMismatch, "vector shorter than vocabulary");
    const Compressed start = compress(xb.first(vocab.size()), config.th);
    const ValenceSets sets = valence_sets_for(start.indices, vocab, table);
    const std::size_t cap = config.max_valence_combinations;
    const std::size_t k = start.fractions.size();

    MhResult result;
    result.active_indices = start.indices;
    std::vector<double> current = start.fractions;
    double current_charge = best_assignment(current, sets, cap).min_abs_charge;
    result.initial_net_valence = current_charge;
    std::vector<double> best = current;
    double best_charge = current_charge;

    const GaussianProposal proposal{config.proposal_sigma};
    Rng rng(config.seed);
    std::vector<double> candidate(k);
    std::vector<double> chosen(k);
    std::size_t it = 0;
    for (; it < config.max_iterations && current_charge > config.valence_tolerance; ++it) {
        double best_log_ratio = -std::numeric_limits<double>::infinity();
        double chosen_charge = 0.0;
        bool have_candidate = false;
        for (std::size_t j = 0; j < config.n_proposals; ++j) {
            double total = 0.0;
            for (std::size_t d = 0; d < k; ++d) {
                candidate[d] = std::max(0.0, current[d] + rng.normal(0.0, config.proposal_sigma));
                total += candidate[d];
            }
            if (total <= 0.0) {
                continue;
            }
            for (double& c : candidate) {
                c /= total;
            }
            const double charge = best_assignment(candidate, sets, cap).min_abs_charge;
            // Clamping makes q asymmetric near the boundary; the symmetric
            // Gaussian density is used for the ratio regardless.
            const double log_ratio = proposal.log_density(current, candidate) - charge * charge -
                                     proposal.log_density(candidate, current) + current_charge * current_charge;
            // argmax over alpha_j; ties at alpha = 1 go to the larger ratio.
            if (log_ratio > best_log_ratio) {
                best_log_ratio = log_ratio;
                chosen = candidate;
                chosen_charge = charge;
                have_candidate = true;
            }
        }
        MhStep step;
        step.iteration = it;
        step.best_alpha = have_candidate ? (best_log_ratio >= 0.0 ? 1.0 : std::exp(best_log_ratio)) : 0.0;
        const double u = rng.uniform();
        step.accepted = have_candidate && u < step.best_alpha;
        if (step.accepted) {
            current = chosen;
            current_charge = chosen_charge;
            if (current_charge < best_charge) {
                best = current;
                best_charge = current_charge;
            }
        }
        step.net_charge = current_charge;
        step.pi_current = std::exp(-current_charge * current_charge);
        step.fractions = current;
        result.trace.push_back(std::move(step));
    }

    result.iterations = it;
    result.balanced = current_charge <= config.valence_tolerance;
    result.fractions = result.balanced ? current : best;
    result.final_net_valence = result.balanced ? current_charge : best_charge;
    for (std::size_t d = 0; d < k; ++d) {
        if (result.fractions[d] > 0.0) {
            result.composition.add(vocab[result.active_indices[d]], result.fractions[d]);
        }
    }
    result.composition.set_fractional(true);
    return result;
}

/// min over assignments of |v . x| with x the fractional composition.
inline double net_valence(const Composition& c, const ValenceTable& table, std::size_t max_combinations = 4096) {
    const Composition f = normalize_fractions(c);
    std::vector<double> fractions;
    ValenceSets sets;
    for (const auto& [sym, x] : f) {
        fractions.push_back(x);
        sets.push_back(table.at(sym));
    }
    return best_assignment(fractions, sets, max_combinations).min_abs_charge;
}

} // namespace compgen
