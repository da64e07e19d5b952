#include <gtest/gtest.h>

#include <fstream>
#include <map>

#include "support.hpp"
#include "thz/cube.hpp"
#include "thz/digest.hpp"
#include "thz/pcnn.hpp"

using namespace thz;

namespace {

const std::filesystem::path kGolden = std::filesystem::path(THZ_SOURCE_DIR) / "tests" / "golden";

std::map<std::string, std::string> checksums() {
    std::map<std::string, std::string> out;
    std::ifstream is(kGolden / "SHA256SUMS");
    std::string hash, name;
    while (is >> hash >> name) out[name] = hash;
    return out;
}

ScanCube small_cube() {
    ScanCube c{3, 2, 8, 0.5, 0.125, -1.0, {}};
    for (int p = 0; p < 6; ++p)
        for (int k = 0; k < 8; ++k) c.data.push_back(k * 0.25 - p);
    return c;
}

}  // namespace

TEST(Golden, ChecksumsMatchFiles) {
    const auto sums = checksums();
    ASSERT_EQ(sums.size(), 2u);
    for (const auto& [name, hash] : sums) EXPECT_EQ(sha256_file(kGolden / name), hash) << name;
}

TEST(Golden, CubeDecodesAndReencodesBitExactly) {
    const auto bytes = test::read_bytes(kGolden / "small.thzc");
    const auto cube = decode_cube(bytes);
    EXPECT_EQ(cube, small_cube());
    EXPECT_EQ(encode_cube(cube), bytes);
}

TEST(Golden, ModelDecodesAndReencodesBitExactly) {
    const auto bytes = test::read_bytes(kGolden / "reduced.pcnn");
    const auto model = pcnn::decode_model(bytes);
    EXPECT_EQ(pcnn::encode_model(model), bytes);
    EXPECT_EQ(model.arch, pcnn::Architecture::reduced());
    // the fixture is regenerated from code: catches drift in initialization or layout
    EXPECT_EQ(pcnn::encode_model(pcnn::reduced_fixture().model), bytes);
}
