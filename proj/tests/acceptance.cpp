// Acceptance checks. `acceptance N` runs one criterion; no argument runs all.
// Prints one PASS/FAIL line per criterion and exits nonzero on any failure.

#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "compgen/cli.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"

using namespace compgen;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = true;
    std::ostringstream detail;

    void check(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail << "[failed: " << what << "] ";
        }
    }
};

// --- shared synthetic setup ----------------------------------------------------

struct SyntheticData {
    FeatureSchema schema;
    Tensor train_x, test_x;
    std::vector<double> train_y, test_y;
    NormalizationStats stats;
};

SyntheticData synthetic_data(Representation rep = Representation::B) {
    const auto bench = make_synthetic_benchmark(2000, 7);
    SplitSpec spec;
    spec.seed = 1;
    spec.train_count = 1600;
    spec.test_count = 400;
    spec.repeats = 1;
    const auto s = split(bench.records, spec).front();
    SyntheticData d;
    d.schema.element_vocab = build_vocab(bench.records);
    d.schema.representation = rep;
    if (rep == Representation::BP) {
        d.schema.descriptor_names = bench.descriptors.names;
    }
    const Tensor raw = feature_matrix(s.train, d.schema, &bench.descriptors);
    d.stats = fit_minmax(raw);
    d.train_x = apply_minmax(raw, d.stats);
    d.test_x = apply_minmax(feature_matrix(s.test, d.schema, &bench.descriptors), d.stats);
    d.train_y = properties(s.train);
    d.test_y = properties(s.test);
    return d;
}

/// Settings sized for a desk run on the synthetic benchmark.
GanTrainConfig desk_gan(std::size_t iterations = 3000) {
    GanTrainConfig c;
    c.iterations = iterations;
    c.batch_size = 64;
    c.adam.learning_rate = 1e-3;
    c.lambda_aux_real = 10.0;
    c.seed = 5;
    return c;
}

GeneratorFn gan_generator(const CondGanModel& m) {
    return [&m](double y, std::size_t n, std::uint64_t seed) { return gan_generate(m, y, n, seed); };
}

std::vector<double> first(const std::vector<double>& v, std::size_t n) {
    return {v.begin(), v.begin() + static_cast<std::ptrdiff_t>(std::min(n, v.size()))};
}

int run_tool(const std::string& args) {
    const std::string cmd = std::string(COMPGEN_TOOL_PATH) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) { return csv::read_text(p.string()); }

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("compgen_acceptance_" + std::to_string(::getpid())) / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

/// A small synthbench run; returns the output root or empty on failure.
fs::path small_pipeline(const std::string& name) {
    const nlohmann::json cfg = {
        {"seed", 11},
        {"split", {{"repeats", 2}}},
        {"condgan", {{"iterations", 150}, {"batch_size", 64}, {"adam", {{"learning_rate", 1e-3}}}}},
        {"dnn", {{"iterations", 150}, {"batch_size", 64}}},
        {"mh", {{"max_iterations", 300}}},
        {"eval",
         {{"n_per_property", 16},
          {"max_test_properties", 20},
          {"n_generate", 16},
          {"mh_properties", 4},
          {"mh_samples_per_property", 5},
          {"histogram_bins", 20}}},
        {"extrapolation", {{"n_per_probe", 8}}},
        {"synthetic", {{"records", 600}}},
    };
    const fs::path root = scratch(name);
    std::ofstream(root / "config.json.in") << cfg.dump(2);
    if (run_tool("synthbench --config " + (root / "config.json.in").string() + " --out " + (root / "run").string()) !=
        0) {
        return {};
    }
    return root / "run";
}

// --- criteria --------------------------------------------------------------------

ad::NodeId random_mlp(ad::Tape& t, std::mt19937_64& gen, ad::NodeId x, std::size_t in, std::size_t out,
                      std::vector<ad::NodeId>& params, std::vector<ad::NodeId>& kinks) {
    std::uniform_int_distribution<std::size_t> width(1, 20), depth(1, 3);
    const std::size_t hidden = depth(gen);
    ad::NodeId h = x;
    std::size_t prev = in;
    for (std::size_t l = 0; l <= hidden; ++l) {
        const std::size_t next = l == hidden ? out : width(gen);
        const double scale = 1.0 / std::sqrt(static_cast<double>(prev));
        const ad::NodeId w = t.variable(gradcheck::random_tensor(gen, next, prev, scale));
        const ad::NodeId b = t.variable(gradcheck::random_tensor(gen, 1, next, 0.1));
        params.push_back(w);
        params.push_back(b);
        h = t.add(t.matmul(h, t.transpose(w)), b);
        if (l < hidden) {
            kinks.push_back(h);
            h = t.relu(h);
        }
        prev = next;
    }
    return h;
}

Outcome criterion_1() {
    Outcome o;
    std::mt19937_64 gen(2024);
    std::uniform_int_distribution<std::size_t> dim(1, 20), rows(1, 8);
    double worst = 0.0, worst_gp = 0.0;
    std::size_t checked = 0, skipped = 0;
    for (int k = 0; k < 50; ++k) {
        ad::Tape t;
        const std::size_t in = dim(gen), out = dim(gen);
        const ad::NodeId x = t.constant(gradcheck::random_tensor(gen, rows(gen), in));
        std::vector<ad::NodeId> params, kinks;
        const ad::NodeId y = random_mlp(t, gen, x, in, out, params, kinks);
        const ad::NodeId loss = t.mean(t.square(y));
        const auto r = gradcheck::check(t, loss, params, kinks);
        worst = std::max(worst, r.max_rel);
        checked += r.checked;
        skipped += r.skipped;
    }
    for (int k = 0; k < 50; ++k) {
        ad::Tape t;
        const std::size_t in = dim(gen);
        const ad::NodeId x = t.variable(gradcheck::random_tensor(gen, rows(gen), in));
        std::vector<ad::NodeId> params, kinks;
        const ad::NodeId d = random_mlp(t, gen, x, in, 1, params, kinks);
        const ad::NodeId norms = ad::input_gradient_norm(t, d, x);
        const ad::NodeId penalty = t.mean(t.square(t.add_scalar(norms, -1.0)));
        worst_gp = std::max(worst_gp, gradcheck::check(t, penalty, params, kinks).max_rel);
    }
    o.check(worst <= 1e-4, "parameter gradients within 1e-4");
    o.check(worst_gp <= 1e-3, "penalty gradients within 1e-3");
    o.check(checked > 10 * skipped, "most coordinates checked");

    // Linear critic D(x) = w.x: penalty (|w| - 1)^2, gradient 2(|w| - 1) w / |w|.
    double closed = 0.0;
    for (int k = 0; k < 20; ++k) {
        const std::size_t n = dim(gen);
        ad::Tape t;
        const Tensor wv = gradcheck::random_tensor(gen, 1, n);
        const ad::NodeId w = t.variable(wv);
        const ad::NodeId x = t.variable(gradcheck::random_tensor(gen, 4, n));
        const ad::NodeId norms = ad::input_gradient_norm(t, t.matmul(x, t.transpose(w)), x);
        const ad::NodeId penalty = t.mean(t.square(t.add_scalar(norms, -1.0)));
        double norm = 0.0;
        for (double v : wv.values()) {
            norm += v * v;
        }
        norm = std::sqrt(norm);
        closed = std::max(closed, std::abs(t.value(penalty).item() - (norm - 1) * (norm - 1)));
        const Tensor g = t.backward(penalty, std::vector{w})[0];
        for (std::size_t i = 0; i < n; ++i) {
            closed = std::max(closed, std::abs(g[i] - 2 * (norm - 1) * wv[i] / norm));
        }
    }
    o.check(closed <= 1e-8, "linear closed form within 1e-8");
    o.detail << "max rel err " << worst << " (" << checked << " coords, " << skipped << " kink-skipped), penalty "
             << worst_gp << ", closed form " << closed;
    return o;
}

Outcome criterion_2() {
    Outcome o;
    std::vector<std::string> corpus{"H2O",          "Ba9Sc2(SiO4)6",   "CH3COOH",      "Ca5(PO4)3(OH)",
                                    "K4(Fe(CN)6)",  "Mg(OH)2",         "O0.74La0.26",  "Li0.29O0.58Mn0.13",
                                    "((CH3)3C)2O",  "Fe2.5O3.75",      "(NH4)2SO4",    "Al2(SO4)3",
                                    "Cu(NO3)2",     "Na2S",            "LiFePO4",      "Ca5B3O9F",
                                    "(Li0.5La0.5)TiO3", "Y(Ba2Cu3)O7", "((((H)2)2)2)2", "Pu(O2)1.5"};
    std::mt19937_64 gen(100);
    const std::vector<std::string> symbols{"H", "Li", "O", "Fe", "La", "Si", "Ba", "Sc", "Na", "S", "N", "C"};
    while (corpus.size() < 100) {
        corpus.push_back(oracle::random_formula(gen, symbols, 3));
    }
    std::size_t matched = 0;
    for (const auto& text : corpus) {
        const auto expected = oracle::flat_counts(oracle::expand_parentheses(text));
        const Composition got = parse_formula(text);
        bool same = got.size() == expected.size();
        for (const auto& [sym, n] : expected) {
            same = same && std::abs(got.count(sym) - n) <= 1e-12 * std::max(1.0, n);
        }
        matched += same ? 1 : 0;
    }
    o.check(matched == corpus.size(), "corpus matches expansion oracle");
    const std::string fixture = format_composition(normalize_fractions(parse_formula("Ba9Sc2(SiO4)6")), 2);
    o.check(fixture == "O0.58Si0.15Sc0.05Ba0.22", "Ba9Sc2(SiO4)6 prints as O0.58Si0.15Sc0.05Ba0.22");
    o.detail << matched << "/" << corpus.size() << " corpus formulas match; fixture renders " << fixture;
    return o;
}

Outcome criterion_3() {
    Outcome o;
    ValenceTable table;
    table.set("Li", {1});
    table.set("Fe", {2, 3});
    table.set("La", {3});
    table.set("O", {-2});
    table.set("F", {-1});
    table.set("C", {-4, 2, 4});
    table.set("N", {-3, 3, 5});
    table.set("P", {-3, 3, 5});
    table.set("S", {-2, 4, 6});
    table.set("Se", {-2, 4, 6});
    table.set("Cl", {-1, 1, 5, 7});
    table.set("I", {-1, 1, 5, 7});
    std::vector<std::string> vocab;
    for (const auto& [sym, states] : table.states) {
        vocab.push_back(sym);
    }
    std::mt19937_64 gen(3);
    std::uniform_int_distribution<std::size_t> count(2, 4);
    std::uniform_real_distribution<double> frac(0.1, 1.0);
    double before = 0.0, after = 0.0;
    std::size_t admissible = 0, balanced = 0, flagged_ok = 0, wrong_flag = 0;
    const auto t0 = std::chrono::steady_clock::now();
    for (int k = 0; k < 200; ++k) {
        std::vector<std::size_t> idx(vocab.size());
        std::iota(idx.begin(), idx.end(), 0);
        std::shuffle(idx.begin(), idx.end(), gen);
        idx.resize(count(gen));
        std::vector<double> xb(vocab.size(), 0.0);
        bool has_pos = false, has_neg = false;
        for (std::size_t i : idx) {
            xb[i] = frac(gen);
            for (int v : table.at(vocab[i])) {
                has_pos = has_pos || v > 0;
                has_neg = has_neg || v < 0;
            }
        }
        const bool can_balance = has_pos && has_neg;
        admissible += can_balance ? 1 : 0;
        MhConfig c;
        c.seed = mix_seed(77, static_cast<std::uint64_t>(k));
        const MhResult r = mh_modify(xb, vocab, c, table);
        before += r.initial_net_valence;
        after += r.final_net_valence;
        balanced += r.balanced ? 1 : 0;
        if (!can_balance) {
            flagged_ok += (!r.balanced && r.iterations == c.max_iterations) ? 1 : 0;
        } else if (!r.balanced) {
            ++wrong_flag;
        }
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const double reduction = 1.0 - after / before;
    o.check(admissible >= 180, ">= 90% of cases admit a balanced assignment");
    o.check(reduction >= 0.70, "mean net valence reduced by >= 70%");
    o.check(flagged_ok == 200 - admissible, "unbalanceable cases flagged");

    const std::vector<std::string> ol{"O", "La"};
    const std::vector<double> fixture{0.74, 0.26};
    MhConfig c;
    c.seed = 1;
    const MhResult r = mh_modify(fixture, ol, c, synthetic_valence_table());
    const double dO = std::abs(r.composition.count("O") - 0.60), dLa = std::abs(r.composition.count("La") - 0.40);
    o.check(dO <= 0.02 && dLa <= 0.02, "O0.74La0.26 converges near O0.60La0.40");
    o.detail << "admissible " << admissible << "/200, mean net valence " << before / 200 << " -> " << after / 200
             << " (" << 100 * reduction << "% reduction), balanced " << balanced << ", flagged " << flagged_ok
             << ", balanceable-but-unbalanced " << wrong_flag << ", fixture -> " << format_composition(r.composition)
             << ", " << seconds << " s";
    return o;
}

Outcome criterion_4() {
    Outcome o;
    std::mt19937_64 gen(44);
    std::uniform_int_distribution<int> nel(1, 5), nst(1, 4), state(-4, 8);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double worst = 0.0;
    std::size_t cases = 0;
    for (int k = 0; k < 5000; ++k) {
        const int n = nel(gen);
        std::vector<double> x(static_cast<std::size_t>(n));
        ValenceSets sets(static_cast<std::size_t>(n));
        double total = 0.0;
        for (int i = 0; i < n; ++i) {
            x[i] = u(gen) + 1e-3;
            total += x[i];
            std::set<int> s;
            const int m = nst(gen);
            while (static_cast<int>(s.size()) < m) {
                s.insert(state(gen));
            }
            sets[i].assign(s.begin(), s.end());
        }
        for (double& v : x) {
            v /= total;
        }
        worst = std::max(worst, std::abs(pi(x, sets) - oracle::pi_bruteforce(x, sets)));
        ++cases;
    }
    o.check(worst <= 1e-12, "pi equals enumeration to 1e-12");
    o.detail << cases << " cases, max |pi - enumeration| " << worst;
    return o;
}

Outcome criterion_5() {
    Outcome o;
    o.check(kl_standard_normal(Tensor(1, 1, 1.0), Tensor(1, 1, 0.0)) == 0.5, "KL(mu=1, sigma=1) == 0.5");
    const SyntheticData d = synthetic_data();
    VaeTrainConfig c;
    c.iterations = 3000;
    c.seed = 5;
    const auto t0 = std::chrono::steady_clock::now();
    const auto r = train_condvae(d.train_x, d.train_y, c);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const std::size_t window = 100;
    double head = 0.0, tail = 0.0, min_kl = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < window; ++i) {
        head += r.trace[i].total / window;
        tail += r.trace[r.trace.size() - window + i].total / window;
    }
    for (const auto& row : r.trace) {
        min_kl = std::min(min_kl, row.kl);
    }
    const double reduction = 1.0 - tail / head;
    o.check(reduction >= 0.30, "smoothed negative ELBO reduced >= 30%");
    o.check(min_kl >= 0.0, "KL nonnegative throughout");
    o.detail << "negative ELBO (100-iteration mean) " << head << " -> " << tail << " (" << 100 * reduction
             << "% reduction), min KL " << min_kl << ", " << seconds << " s";
    return o;
}

Outcome criterion_6() {
    Outcome o;
    const SyntheticData d = synthetic_data();
    const auto t0 = std::chrono::steady_clock::now();
    const auto trained = train_condgan(d.train_x, d.train_y, desk_gan());
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const auto untrained = train_condgan(d.train_x, d.train_y, desk_gan(0));
    const ReferenceSet ref{d.train_x, d.train_y, {}};
    GenerationOptions opt;
    opt.n_per_property = 64;
    opt.seed = 9;
    const auto targets = first(d.test_y, 20);
    const double mae = eval_generation(gan_generator(trained.model), targets, ref, opt).full.mae;
    const double base = eval_generation(gan_generator(untrained.model), targets, ref, opt).full.mae;
    o.check(base >= 2.0 * mae, "trained MAE at least 2x below untrained");

    // Gradient-flow separation.
    const CondGanModel& m = trained.model;
    Rng rng(1);
    const auto idx = sample_batch(rng, d.train_x.rows(), 32);
    const Tensor xr = gather_rows(d.train_x, idx), yr = column_of(d.train_y, idx);
    const Tensor z = standard_normal(rng, 32, m.latent_dim);
    std::vector<double> eps(32);
    for (double& e : eps) {
        e = rng.uniform();
    }
    bool separated = true;
    {
        ad::Tape t;
        const MlpBinding gen = bind(t, m.generator, true);
        const MlpBinding critic = bind(t, m.critic, true);
        const auto loss = build_critic_loss(t, m, gen, critic, xr, yr, z, eps, desk_gan());
        for (const Tensor& g : t.backward(loss.total, gen.nodes())) {
            for (double v : g.values()) {
                separated = separated && v == 0.0;
            }
        }
    }
    {
        ad::Tape t;
        const MlpBinding gen = bind(t, m.generator, true);
        const MlpBinding critic = bind(t, m.critic, false);
        const ad::NodeId loss = build_generator_loss(t, m, gen, critic, z, yr, desk_gan());
        for (const Tensor& g : t.backward(loss, critic.nodes())) {
            for (double v : g.values()) {
                separated = separated && v == 0.0;
            }
        }
    }
    o.check(separated, "critic loss gives generator no gradient and vice versa");

    // Linear critic, all lambdas zero: loss is mean D(fake) - mean D(real).
    CondGanModel lin = make_condgan(d.train_x.cols(), 10, 3);
    lin.critic_spec.hidden_activation = Activation::Identity;
    GanTrainConfig zero;
    zero.lambda_gp = zero.lambda_aux_fake = zero.lambda_aux_real = 0.0;
    const auto terms = critic_loss(lin, xr, yr, z, eps, zero);
    Tensor gin(32, lin.latent_dim + 1);
    for (std::size_t r = 0; r < 32; ++r) {
        for (std::size_t k = 0; k < lin.latent_dim; ++k) {
            gin(r, k) = z(r, k);
        }
        gin(r, lin.latent_dim) = yr(r, 0);
    }
    const Tensor fake = mlp_apply(lin.generator_spec, lin.generator, gin);
    const Tensor df = mlp_apply(lin.critic_spec, lin.critic, fake);
    const Tensor dr = mlp_apply(lin.critic_spec, lin.critic, xr);
    double diff = 0.0;
    for (std::size_t r = 0; r < 32; ++r) {
        diff += (df(r, 0) - dr(r, 0)) / 32.0;
    }
    const double lin_err = std::abs(terms.total - diff);
    o.check(lin_err <= 1e-12, "linear critic reduces to batch-mean difference");
    o.detail << "eval MAE trained " << mae << " vs untrained " << base << " (" << base / mae << "x), linear error "
             << lin_err << ", train " << seconds << " s";
    return o;
}

Outcome criterion_7() {
    Outcome o;
    const SyntheticData d = synthetic_data();
    const auto gan = train_condgan(d.train_x, d.train_y, desk_gan());
    DnnTrainConfig dc;
    dc.iterations = 3000;
    dc.batch_size = 64;
    dc.seed = 3;
    const DnnBaseline dnn = train_dnn_baseline(d.train_x, d.train_y, dc);
    const double p_mae =
        eval_predictor([&](const Tensor& x) { return predict_property(gan.model, x); }, d.test_x, d.test_y).mae;
    const double d_mae = eval_predictor([&](const Tensor& x) { return dnn.predict(x); }, d.test_x, d.test_y).mae;
    o.check(p_mae < 0.1, "P head test MAE < 0.1");
    o.check(d_mae < 0.1, "DNN test MAE < 0.1");
    o.check(p_mae <= 2.0 * d_mae, "P head within 2x of DNN");
    o.detail << "test MAE P head " << p_mae << ", DNN " << d_mae << " (ratio " << p_mae / d_mae << ")";
    return o;
}

Outcome criterion_8() {
    Outcome o;
    // Bag-of-atoms plus descriptors, as in the original extrapolation study.
    const SyntheticData d = synthetic_data(Representation::BP);
    const auto [lo_it, hi_it] = std::minmax_element(d.train_y.begin(), d.train_y.end());
    std::vector<double> probes;
    for (int i = 0; i <= 10; ++i) {
        probes.push_back(*lo_it + (*hi_it - *lo_it) * i / 10.0);
    }
    // Upper bounds sit on probes so boundary probes count as interior.
    const std::vector<PropertyRange> ranges{{probes[0], probes[10]}, {probes[0], probes[6]}, {probes[0], probes[3]}};
    std::vector<CondGanModel> models;
    models.reserve(ranges.size());
    const TrainerFn trainer = [&](const Tensor& x, std::span<const double> y) -> GeneratorFn {
        models.push_back(train_condgan(x, y, desk_gan()).model);
        return gan_generator(models.back());
    };
    const ReferenceSet ref{d.train_x, d.train_y, {}};
    const auto curves = extrapolation_sweep(d.train_x, d.train_y, ranges, trainer, probes, ref, 64, 9);

    auto mean_where = [&](const ExtrapolationCurve& c, const std::function<bool(double)>& keep) {
        double s = 0.0;
        std::size_t n = 0;
        for (std::size_t i = 0; i < c.probes.size(); ++i) {
            if (keep(c.probes[i])) {
                s += c.rmse[i];
                ++n;
            }
        }
        return n ? s / static_cast<double>(n) : 0.0;
    };
    for (const auto& c : curves) {
        const double inside = mean_where(c, [&](double y) { return c.range.contains(y); });
        const double outside = mean_where(c, [&](double y) { return !c.range.contains(y); });
        o.detail << "[" << c.range.lo << ", " << c.range.hi << "] n=" << c.training_records << " interior "
                 << inside << " exterior " << outside << "; ";
        if (outside > 0.0) {
            o.check(outside > inside, "exterior RMSE above interior");
        }
    }
    const PropertyRange& narrow = ranges.back();
    std::vector<double> ext;
    for (const auto& c : curves) {
        ext.push_back(mean_where(c, [&](double y) { return !narrow.contains(y); }));
    }
    o.check(ext[0] < ext[1] && ext[0] < ext[2], "widest range lowest at exterior probes");
    o.detail << "exterior-probe RMSE by range " << ext[0] << " / " << ext[1] << " / " << ext[2];
    return o;
}

Outcome criterion_9() {
    Outcome o;
    const fs::path run = small_pipeline("replay");
    o.check(!run.empty(), "synthbench run succeeds");
    if (run.empty()) {
        return o;
    }
    std::size_t compared = 0, differing = 0;
    for (const char* step : {"featurize", "train", "generate", "modify", "evaluate", "extrapolate"}) {
        const fs::path again = run.parent_path() / "replay" / step;
        const int rc = run_tool(std::string(step) + " --config " + (run / step / "config.json").string() + " --out " +
                                again.string());
        o.check(rc == 0, std::string(step) + " replay runs");
        for (const auto& e : fs::recursive_directory_iterator(run / step)) {
            if (!e.is_regular_file()) {
                continue;
            }
            const fs::path other = again / fs::relative(e.path(), run / step);
            ++compared;
            if (!fs::exists(other) || slurp(e.path()) != slurp(other)) {
                ++differing;
                o.detail << "differs: " << step << "/" << fs::relative(e.path(), run / step).string() << " ";
            }
        }
    }
    o.check(differing == 0 && compared > 0, "replayed files byte-identical");
    o.detail << compared << " files compared across 6 commands, " << differing << " differ";
    return o;
}

void collect_mae_rmse(const nlohmann::json& j, std::size_t& pairs, std::size_t& violations) {
    if (j.is_object()) {
        if (j.contains("mae") && j.contains("rmse")) {
            const auto& a = j.at("mae");
            const auto& b = j.at("rmse");
            const double mae = a.is_object() ? a.at("mean").get<double>() : a.get<double>();
            const double rmse = b.is_object() ? b.at("mean").get<double>() : b.get<double>();
            ++pairs;
            violations += mae <= rmse ? 0 : 1;
        }
        for (const auto& [k, v] : j.items()) {
            collect_mae_rmse(v, pairs, violations);
        }
    } else if (j.is_array()) {
        for (const auto& v : j) {
            collect_mae_rmse(v, pairs, violations);
        }
    }
}

Outcome criterion_10() {
    Outcome o;
    const fs::path run = small_pipeline("audit");
    o.check(!run.empty(), "synthbench run succeeds");
    if (!run.empty()) {
        std::size_t pairs = 0, violations = 0, reports = 0;
        for (const auto& e : fs::recursive_directory_iterator(run)) {
            if (e.is_regular_file() && e.path().extension() == ".json") {
                collect_mae_rmse(nlohmann::json::parse(slurp(e.path())), pairs, violations);
                ++reports;
            }
        }
        o.check(pairs > 0 && violations == 0, "MAE <= RMSE in every report");
        bool audited = true;
        std::size_t audits = 0;
        for (const char* name : {"report", "report_xb"}) {
            const fs::path report = run / "evaluate" / (std::string(name) + ".json");
            const fs::path samples =
                run / "evaluate" / (std::string(name == std::string("report") ? "samples" : "samples_xb") + ".csv");
            if (fs::exists(report)) {
                audited = audited && audit_report(nlohmann::json::parse(slurp(report)),
                                                  read_samples_csv(samples.string()));
                ++audits;
            }
        }
        o.check(audits > 0 && audited, "aggregates recompute from samples bit-identically");
        o.detail << pairs << " MAE/RMSE pairs in " << reports << " JSON files, " << violations << " violations; "
                 << audits << " reports audited; ";
    }

    std::mt19937_64 gen(10);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const std::size_t rows = 500, cols = 12;
    std::vector<double> flat(rows * cols);
    for (double& v : flat) {
        v = u(gen);
    }
    const Tensor ref(rows, cols, flat);
    std::size_t agree = 0;
    for (int k = 0; k < 1000; ++k) {
        std::vector<double> q(cols);
        for (double& v : q) {
            v = u(gen);
        }
        const auto want = oracle::linear_scan(q, flat, rows, cols);
        const auto got = nearest(q, ref);
        agree += (got.index == want.index && std::abs(got.distance - want.distance) <= 1e-12) ? 1 : 0;
    }
    o.check(agree == 1000, "nearest matches linear scan");
    o.detail << "nearest agrees on " << agree << "/1000 queries";
    return o;
}

const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
    {"autodiff gradients match finite differences", criterion_1},
    {"formula parser and normalization fixture", criterion_2},
    {"valence repair reduces net valence", criterion_3},
    {"pi equals exhaustive enumeration", criterion_4},
    {"CondVAE training sanity", criterion_5},
    {"CondGAN training sanity", criterion_6},
    {"predictor head vs DNN baseline", criterion_7},
    {"extrapolation ordering", criterion_8},
    {"determinism and replay", criterion_9},
    {"evaluation self-audit", criterion_10},
};

} // namespace

int main(int argc, char** argv) {
    std::vector<std::size_t> which;
    if (argc > 1) {
        for (int i = 1; i < argc; ++i) {
            const long n = std::strtol(argv[i], nullptr, 10);
            if (n < 1 || n > static_cast<long>(criteria.size())) {
                std::cerr << "usage: acceptance [1-" << criteria.size() << "]...\n";
                return 2;
            }
            which.push_back(static_cast<std::size_t>(n));
        }
    } else {
        for (std::size_t n = 1; n <= criteria.size(); ++n) {
            which.push_back(n);
        }
    }
    int failures = 0;
    for (std::size_t n : which) {
        const auto& [name, run] = criteria[n - 1];
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = run();
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail << "exception: " << e.what();
        }
        const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << n << ": " << name << " -- " << o.detail.str()
                  << " (" << s << " s)" << std::endl;
        failures += o.pass ? 0 : 1;
    }
    return failures == 0 ? 0 : 1;
}
