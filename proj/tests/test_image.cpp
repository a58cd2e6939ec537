#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <limits>

#include <pcst/errors.hpp>
#include <pcst/image.hpp>
#include <pcst/netpbm.hpp>
#include <pcst/rng.hpp>
#include <pcst/tensor_io.hpp>

#include "oracles.hpp"

using namespace pcst;

namespace {

std::vector<std::uint8_t> bytes_of(const std::string& header, std::initializer_list<int> payload) {
    std::vector<std::uint8_t> b(header.begin(), header.end());
    for (int v : payload) b.push_back(static_cast<std::uint8_t>(v));
    return b;
}

Image random_image(int c, int h, int w, Rng& rng, bool integral) {
    Image img(c, h, w);
    for (float& v : img.samples()) v = integral ? static_cast<float>(rng.uniform_index(256)) : static_cast<float>(rng.normal() * 50.0);
    return img;
}

std::filesystem::path temp_path(const std::string& name) {
    return std::filesystem::temp_directory_path() / ("pcst_test_" + name);
}

} // namespace

TEST(Netpbm, DecodesGrayBytesDirectly) {
    const Image img = decode_netpbm(bytes_of("P5\n2 2\n255\n", {0, 128, 255, 7}));
    EXPECT_EQ(img, Image(1, 2, 2, std::vector<float>{0, 128, 255, 7}));
}

TEST(Netpbm, ColorIsStoredPlanar) {
    const Image img = decode_netpbm(bytes_of("P6 3 1 255\n", {255, 0, 0, 0, 255, 0, 0, 0, 255}));
    ASSERT_EQ(img.channels(), 3);
    EXPECT_EQ(img.data(), (std::vector<float>{255, 0, 0, 0, 255, 0, 0, 0, 255}));
    const Image red = decode_netpbm(bytes_of("P6\n3 1\n255\n", {255, 0, 0, 0, 0, 0, 0, 0, 0}));
    EXPECT_EQ(red.data(), (std::vector<float>{255, 0, 0, 0, 0, 0, 0, 0, 0}));
}

TEST(Netpbm, HeaderCommentsAreSkipped) {
    const Image img = decode_netpbm(bytes_of("P5\n# made by hand\n2 1 # trailing\n255\n", {9, 10}));
    EXPECT_EQ(img.data(), (std::vector<float>{9, 10}));
}

TEST(Netpbm, MalformedInputReportsOffset) {
    EXPECT_THROW(decode_netpbm(bytes_of("P4\n2 2\n255\n", {0, 0, 0, 0})), format_error);
    EXPECT_THROW(decode_netpbm(bytes_of("P5\n2 2\n65535\n", {0, 0, 0, 0})), format_error);
    try {
        decode_netpbm(bytes_of("P5\n2 2\n255\n", {1, 2, 3}));
        FAIL() << "truncated payload accepted";
    } catch (const format_error& e) {
        EXPECT_EQ(e.offset(), 14u);
        EXPECT_NE(std::string(e.what()).find("byte"), std::string::npos);
    }
}

TEST(Netpbm, SaveClampsAndRoundsHalfAway) {
    EXPECT_EQ(quantize_sample(255.7f), 255);
    EXPECT_EQ(quantize_sample(-3.2f), 0);
    EXPECT_EQ(quantize_sample(127.5f), 128);
    EXPECT_EQ(quantize_sample(126.5f), 127);
    EXPECT_EQ(quantize_sample(0.49f), 0);
}

TEST(Netpbm, RoundTripIsExactForEightBitContent) {
    Rng rng(3);
    for (int c : {1, 3}) {
        const Image img = random_image(c, 7, 5, rng, true);
        const auto path = temp_path(c == 1 ? "rt.pgm" : "rt.ppm");
        save_image(img, path);
        EXPECT_EQ(load_image(path), img);
        EXPECT_EQ(encode_netpbm(load_image(path)), encode_netpbm(img));
        std::filesystem::remove(path);
    }
}

TEST(TensorFile, TwoByTwoIsThirtySixBytes) {
    const Tensor t({2, 2}, std::vector<float>{1, 2, 3, 4});
    const auto bytes = encode_pcrf(t);
    ASSERT_EQ(bytes.size(), 36u);
    EXPECT_EQ(std::memcmp(bytes.data(), "PCRF", 4), 0);
    EXPECT_EQ(bytes[4], 1);
    EXPECT_EQ(bytes[8], 2);
    EXPECT_EQ(bytes[12], 2);
    EXPECT_EQ(bytes[16], 2);
    float first = 0;
    std::memcpy(&first, bytes.data() + 20, 4);
    EXPECT_EQ(first, 1.0f);
}

TEST(TensorFile, RoundTripKeepsNegativesAndSubnormals) {
    Rng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        const auto rank = 1 + static_cast<std::uint32_t>(rng.uniform_index(3));
        std::vector<std::uint32_t> shape;
        for (std::uint32_t i = 0; i < rank; ++i) shape.push_back(1 + static_cast<std::uint32_t>(rng.uniform_index(6)));
        Tensor t(shape);
        for (float& v : t.data) v = static_cast<float>(rng.normal() * 1e3);
        t.data[0] = std::numeric_limits<float>::denorm_min();
        t.data.back() = -std::numeric_limits<float>::denorm_min() * 7.0f;
        const auto bytes = encode_pcrf(t);
        const Tensor back = decode_pcrf(bytes);
        EXPECT_EQ(back, t);
        EXPECT_EQ(encode_pcrf(back), bytes);
    }
    const auto path = temp_path("t.pcrf");
    const Tensor t({3}, std::vector<float>{-1.5f, 0.0f, 2.25f});
    save_tensor(t, path);
    EXPECT_EQ(load_tensor(path), t);
    std::filesystem::remove(path);
}

TEST(TensorFile, RejectsBadHeaders) {
    auto good = encode_pcrf(Tensor({2}, std::vector<float>{1, 2}));
    auto bad_magic = good;
    bad_magic[0] = 'X';
    EXPECT_THROW(decode_pcrf(bad_magic), format_error);
    auto bad_version = good;
    bad_version[4] = 2;
    EXPECT_THROW(decode_pcrf(bad_version), format_error);
    auto rank_zero = good;
    rank_zero[8] = 0;
    EXPECT_THROW(decode_pcrf(rank_zero), format_error);
    auto short_payload = good;
    short_payload.pop_back();
    EXPECT_THROW(decode_pcrf(short_payload), format_error);
    auto long_payload = good;
    long_payload.push_back(0);
    EXPECT_THROW(decode_pcrf(long_payload), format_error);
}

TEST(MirrorPad, ReflectsWithoutRepeatingTheEdge) {
    const Image row(1, 1, 3, std::vector<float>{1, 2, 3});
    const Image out = mirror_pad(row, 0, 0, 1, 1);
    EXPECT_EQ(out.data(), (std::vector<float>{2, 1, 2, 3, 2}));
    EXPECT_EQ(mirror_pad(row, 0, 0, 0, 0), row);
}

TEST(MirrorPad, MatchesFoldingOracle) {
    Rng rng(5);
    const Image img = random_image(2, 5, 5, rng, false);
    for (int p = 0; p <= 4; ++p) EXPECT_EQ(mirror_pad(img, p, p, p, p), oracle::mirror_pad(img, p, p, p, p));
    EXPECT_EQ(mirror_pad(img, 4, 1, 0, 3), oracle::mirror_pad(img, 4, 1, 0, 3));
}

TEST(MirrorPad, PadThenCropIsIdentity) {
    Rng rng(6);
    for (int trial = 0; trial < 30; ++trial) {
        const int h = 1 + static_cast<int>(rng.uniform_index(8)), w = 1 + static_cast<int>(rng.uniform_index(8));
        const Image img = random_image(1, h, w, rng, false);
        const int t = static_cast<int>(rng.uniform_index(h)), b = static_cast<int>(rng.uniform_index(h));
        const int l = static_cast<int>(rng.uniform_index(w)), r = static_cast<int>(rng.uniform_index(w));
        EXPECT_EQ(crop(mirror_pad(img, t, b, l, r), t, l, h, w), img);
    }
}

TEST(MirrorPad, PadAsLargeAsDimensionIsRejected) {
    const Image img(1, 3, 4);
    EXPECT_THROW(mirror_pad(img, 3, 0, 0, 0), std::invalid_argument);
    EXPECT_THROW(mirror_pad(img, 0, 0, 0, 4), std::invalid_argument);
}

TEST(Psnr, IdenticalImagesGiveInfinity) {
    const Image a(1, 4, 4, 10.0f);
    EXPECT_TRUE(std::isinf(psnr(a, a)));
}

TEST(Psnr, UnitDifferenceClosedForm) {
    const Image a(3, 4, 4, 10.0f), b(3, 4, 4, 11.0f);
    EXPECT_NEAR(psnr(a, b), 20.0 * std::log10(255.0), 1e-12);
    EXPECT_NEAR(psnr(a, b), 48.13, 0.005);
}

TEST(Psnr, SymmetricAndDecreasingInError) {
    Rng rng(8);
    const Image a = random_image(1, 6, 6, rng, false);
    Image b = a, c = a;
    for (float& v : b.samples()) v += 1.0f;
    for (float& v : c.samples()) v += 2.0f;
    EXPECT_EQ(psnr(a, b), psnr(b, a));
    EXPECT_GT(psnr(a, b), psnr(a, c));
    EXPECT_THROW(psnr(a, Image(1, 5, 6)), std::invalid_argument);
}

TEST(BurstShape, ValidationCatchesBadBursts) {
    Burst b;
    b.frames = {Image(1, 4, 4)};
    EXPECT_THROW(b.validate(), std::invalid_argument);
    b.frames.push_back(Image(1, 4, 5));
    EXPECT_THROW(b.validate(), std::invalid_argument);
    b.frames.back() = Image(1, 4, 4);
    b.input_index = 2;
    EXPECT_THROW(b.validate(), std::invalid_argument);
    b.input_index = 1;
    EXPECT_NO_THROW(b.validate());
}
