#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "compgen/features.hpp"

using namespace compgen;

namespace {

FeatureSchema schema(std::vector<std::string> vocab, std::vector<std::string> descriptors = {},
                     Representation r = Representation::B) {
    FeatureSchema s;
    s.element_vocab = std::move(vocab);
    s.descriptor_names = std::move(descriptors);
    s.representation = r;
    return s;
}

DescriptorTable toy_table() {
    DescriptorTable t;
    t.names = {"a", "b"};
    t.rows["H"] = {1.0, 0.0};
    t.rows["O"] = {0.0, 3.0};
    t.rows["Li"] = {5.0, -1.0};
    return t;
}

ErrorCode code_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "no error";
    return ErrorCode::InvalidArgument;
}

std::string temp_file(const std::string& name, const std::string& text) {
    const auto path = std::filesystem::temp_directory_path() / ("compgen_features_" + name);
    csv::write_text(path.string(), text);
    return path.string();
}

} // namespace

TEST(BagOfAtoms, RawCounts) {
    const auto s = schema({"H", "Li", "O"});
    EXPECT_EQ(bag_of_atoms(parse_formula("H2O"), s).values, (std::vector<double>{2, 0, 1}));
    EXPECT_EQ(bag_of_atoms(parse_formula("Li"), s).values, (std::vector<double>{0, 1, 0}));
    EXPECT_EQ(bag_of_atoms(parse_formula("Na2S"), schema({"Na", "S"})).values, (std::vector<double>{2, 1}));
    EXPECT_EQ(code_of([&] { bag_of_atoms(parse_formula("Fe"), s); }), ErrorCode::ElementOutsideVocabulary);
}

TEST(BagOfAtoms, Linear) {
    const auto s = schema({"H", "Li", "O", "Fe"});
    std::mt19937_64 gen(3);
    std::uniform_int_distribution<int> n(0, 5);
    for (int i = 0; i < 50; ++i) {
        Composition a, b, u;
        for (const char* e : {"H", "Li", "O", "Fe"}) {
            const int x = n(gen), y = n(gen);
            if (x > 0) a.add(e, x), u.add(e, x);
            if (y > 0) b.add(e, y), u.add(e, y);
        }
        if (a.empty() || b.empty()) {
            continue;
        }
        const auto va = bag_of_atoms(a, s).values, vb = bag_of_atoms(b, s).values, vu = bag_of_atoms(u, s).values;
        for (std::size_t k = 0; k < vu.size(); ++k) {
            EXPECT_EQ(vu[k], va[k] + vb[k]);
        }
    }
}

TEST(WeightedDescriptors, FractionWeightedMean) {
    const auto t = toy_table();
    const auto v = weighted_descriptors(parse_formula("H2O"), t).values;
    EXPECT_NEAR(v[0], 2.0 / 3.0, 1e-15);
    EXPECT_NEAR(v[1], 1.0, 1e-15);
    EXPECT_EQ(weighted_descriptors(parse_formula("Li"), t).values, t.rows.at("Li"));
    EXPECT_EQ(weighted_descriptors(parse_formula("H4O2"), t).values, weighted_descriptors(parse_formula("H2O"), t).values);
    EXPECT_EQ(code_of([&] { weighted_descriptors(parse_formula("Fe"), t); }), ErrorCode::MissingDescriptorRow);
}

TEST(ConcatBp, Layout) {
    FeatureVector xb{{2, 0, 1}, 3, 0, false};
    FeatureVector xp{{0.5}, 0, 1, false};
    const auto v = concat_bp(xb, xp);
    EXPECT_EQ(v.values, (std::vector<double>{2, 0, 1, 0.5}));
    EXPECT_EQ(v.b_dim, 3u);
    EXPECT_EQ(v.p_dim, 1u);
    FeatureVector empty{{}, 0, 0, false};
    EXPECT_EQ(code_of([&] { concat_bp(empty, xp); }), ErrorCode::SchemaMismatch);
}

TEST(Featurize, BpDimension) {
    const auto s = schema({"H", "Li", "O"}, {"a", "b"}, Representation::BP);
    const auto t = toy_table();
    const auto v = featurize(parse_formula("H2O"), s, &t);
    EXPECT_EQ(v.size(), s.dim());
    EXPECT_EQ(v.size(), 5u);
    auto other = toy_table();
    other.names = {"x", "y"};
    EXPECT_EQ(code_of([&] { featurize(parse_formula("H2O"), s, &other); }), ErrorCode::SchemaMismatch);
}

TEST(MinMax, FitMatchesColumnScan) {
    Tensor m(100, 5);
    std::mt19937_64 gen(5);
    std::normal_distribution<double> d(0.0, 3.0);
    for (double& v : m.values()) {
        v = d(gen);
    }
    const auto stats = fit_minmax(m);
    for (std::size_t c = 0; c < 5; ++c) {
        double lo = m(0, c), hi = m(0, c);
        for (std::size_t r = 1; r < 100; ++r) {
            lo = std::min(lo, m(r, c));
            hi = std::max(hi, m(r, c));
        }
        EXPECT_EQ(stats.min[c], lo);
        EXPECT_EQ(stats.max[c], hi);
    }
    const Tensor n = apply_minmax(m, stats);
    for (double v : n.values()) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
    }
}

TEST(MinMax, SmallCases) {
    const auto stats = fit_minmax(Tensor(2, 2, std::vector<double>{0, 2, 4, 2}));
    EXPECT_EQ(stats.min, (std::vector<double>{0, 2}));
    EXPECT_EQ(stats.max, (std::vector<double>{4, 2}));
    std::vector<double> v{2, 2};
    apply_minmax_inplace(v, stats);
    EXPECT_EQ(v, (std::vector<double>{0.5, 0.0}));
    invert_minmax_inplace(v, stats);
    EXPECT_EQ(v, (std::vector<double>{2, 2}));

    std::vector<double> at_min{0, 2};
    apply_minmax_inplace(at_min, stats);
    EXPECT_EQ(at_min, (std::vector<double>{0, 0}));

    EXPECT_EQ(code_of([] { fit_minmax(Tensor(0, 3)); }), ErrorCode::EmptyInput);
    std::vector<double> wrong{1, 2, 3};
    EXPECT_EQ(code_of([&] { apply_minmax_inplace(wrong, stats); }), ErrorCode::DimensionMismatch);
}

TEST(MinMax, RoundTrip) {
    NormalizationStats stats{{-3, 0, 10}, {5, 1, 20}};
    std::mt19937_64 gen(9);
    for (int i = 0; i < 200; ++i) {
        std::vector<double> v(3);
        for (std::size_t k = 0; k < 3; ++k) {
            v[k] = std::uniform_real_distribution<double>(stats.min[k], stats.max[k])(gen);
        }
        auto w = v;
        apply_minmax_inplace(w, stats);
        invert_minmax_inplace(w, stats);
        for (std::size_t k = 0; k < 3; ++k) {
            EXPECT_NEAR(w[k], v[k], 1e-12);
        }
    }
}

TEST(VectorToComposition, Threshold) {
    const std::vector<std::string> vocab{"Li", "F", "O"};
    const std::vector<double> v{0.9, 0.02, 0.5};
    const Composition c = vector_to_composition(v, vocab, 0.03);
    EXPECT_TRUE(c.is_fractional());
    EXPECT_NEAR(c.count("Li"), 0.9 / 1.4, 1e-15);
    EXPECT_NEAR(c.count("O"), 0.5 / 1.4, 1e-15);
    EXPECT_FALSE(c.contains("F"));

    const std::vector<double> one{0.01, 0.2, 0.03};
    EXPECT_EQ(vector_to_composition(one, vocab, 0.03).count("F"), 1.0);
    const std::vector<double> none{0.01, 0.02, 0.03};
    EXPECT_EQ(code_of([&] { vector_to_composition(none, vocab, 0.03); }), ErrorCode::NoSurvivingAtoms);
}

TEST(VectorToComposition, SumsToOne) {
    std::mt19937_64 gen(13);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const std::vector<std::string> vocab{"H", "Li", "O", "Fe", "La", "Si"};
    for (int i = 0; i < 500; ++i) {
        std::vector<double> v(vocab.size());
        for (double& x : v) {
            x = u(gen);
        }
        v[0] = 0.5;
        EXPECT_NEAR(vector_to_composition(v, vocab, 0.03).total(), 1.0, 1e-9);
    }
}

TEST(DescriptorTableFile, LoadsAndRejectsGaps) {
    const auto good = temp_file("good.csv", "element,a,b\nH,1,0\nO,0,3\n");
    const auto t = load_descriptor_table(good);
    EXPECT_EQ(t.names, (std::vector<std::string>{"a", "b"}));
    EXPECT_EQ(t.row("O"), (std::vector<double>{0, 3}));

    const auto gap = temp_file("gap.csv", "element,a,b\nH,1,\n");
    EXPECT_EQ(code_of([&] { load_descriptor_table(gap); }), ErrorCode::MissingDescriptorRow);
    const auto nan = temp_file("nan.csv", "element,a,b\nH,1,nan\n");
    EXPECT_EQ(code_of([&] { load_descriptor_table(nan); }), ErrorCode::NonFiniteValue);
}
