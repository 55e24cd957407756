#include <gtest/gtest.h>

#include <filesystem>

#include "compgen/checkpoint.hpp"
#include "compgen/condgan.hpp"
#include "compgen/condvae.hpp"

using namespace compgen;

namespace {

ErrorCode decode_code(const std::string& bytes) {
    try {
        decode_checkpoint(bytes);
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "decoded";
    return ErrorCode::InvalidArgument;
}

ModelCheckpoint sample() {
    ModelCheckpoint c;
    c.model_kind = "toy";
    c.meta["note"] = "x";
    c.arrays.emplace_back("a", Tensor(2, 3, std::vector<double>{0.1, -0.0, 1e-300, 3.5, -7.25, 1.0 / 3.0}));
    c.arrays.emplace_back("b", Tensor(1, 1, 42.0));
    return c;
}

} // namespace

TEST(Checkpoint, RoundTripIsBitIdentical) {
    const ModelCheckpoint c = sample();
    const std::string bytes = encode_checkpoint(c);
    const ModelCheckpoint back = decode_checkpoint(bytes);
    EXPECT_EQ(back.model_kind, "toy");
    EXPECT_EQ(back.meta, c.meta);
    ASSERT_EQ(back.arrays.size(), 2u);
    for (std::size_t i = 0; i < 2; ++i) {
        EXPECT_EQ(back.arrays[i].first, c.arrays[i].first);
        const auto& x = back.arrays[i].second.values();
        const auto& y = c.arrays[i].second.values();
        ASSERT_EQ(x.size(), y.size());
        for (std::size_t k = 0; k < x.size(); ++k) {
            EXPECT_EQ(std::bit_cast<std::uint64_t>(x[k]), std::bit_cast<std::uint64_t>(y[k]));
        }
    }
    EXPECT_EQ(encode_checkpoint(back), bytes);
}

TEST(Checkpoint, CorruptionDetected) {
    std::string bytes = encode_checkpoint(sample());
    std::string flipped = bytes;
    flipped[flipped.size() / 2] ^= 0x01;
    EXPECT_EQ(decode_code(flipped), ErrorCode::ChecksumMismatch);
    EXPECT_EQ(decode_code(bytes.substr(0, bytes.size() - 3)), ErrorCode::ChecksumMismatch);
    EXPECT_EQ(decode_code("short"), ErrorCode::ChecksumMismatch);
}

TEST(Checkpoint, VersionMismatch) {
    ModelCheckpoint c = sample();
    c.version = checkpoint_version + 1;
    EXPECT_EQ(decode_code(encode_checkpoint(c)), ErrorCode::VersionMismatch);
}

TEST(Checkpoint, ModelsSurviveFiles) {
    const auto dir = std::filesystem::temp_directory_path();
    const CondGanModel gan = make_condgan(6, 4, 9);
    save_checkpoint((dir / "compgen_gan.ckpt").string(), to_checkpoint(gan));
    const CondGanModel g2 = condgan_from_checkpoint(load_checkpoint((dir / "compgen_gan.ckpt").string()));
    EXPECT_EQ(g2.generator, gan.generator);
    EXPECT_EQ(g2.critic, gan.critic);
    EXPECT_EQ(g2.critic_spec, gan.critic_spec);
    EXPECT_EQ(gan_generate(g2, -1.0, 8, 5), gan_generate(gan, -1.0, 8, 5));

    const CondVaeModel vae = make_condvae(6, 3, 2);
    const CondVaeModel v2 = condvae_from_checkpoint(decode_checkpoint(encode_checkpoint(to_checkpoint(vae))));
    EXPECT_EQ(v2.encoder, vae.encoder);
    EXPECT_EQ(v2.decoder, vae.decoder);
    EXPECT_THROW(condvae_from_checkpoint(to_checkpoint(gan)), Error);
}

TEST(Checkpoint, StatsKeepFullPrecision) {
    const NormalizationStats s{{0.1, -1.0 / 3.0, 1e-17}, {0.7, 2.0 / 3.0, 5e300}};
    const NormalizationStats back = stats_from_json(nlohmann::json::parse(to_json(s).dump()));
    EXPECT_EQ(back.min, s.min);
    EXPECT_EQ(back.max, s.max);
}
