#include <doctest.h>

#include <filesystem>
#include <random>

#include "cdvz/common.hpp"
#include "cdvz/container.hpp"
#include "cdvz/model_io.hpp"

using namespace cdvz;

namespace {

EncodedImage sample_container(std::uint64_t seed, const char* mode_name = "4K") {
  std::mt19937_64 rng(seed);
  const ModeSpec& mode = mode_by_name(mode_name);

  const int nc = 16;
  GMMModel gmm;
  gmm.weights = Eigen::VectorXd::Constant(nc, 1.0 / nc);
  gmm.means = Eigen::MatrixXd::Zero(nc, 32);
  gmm.stds = Eigen::MatrixXd::Ones(nc, 32);
  Eigen::MatrixXd gm(nc, 32), gv(nc, 32);
  for (int i = 0; i < nc; ++i)
    for (int j = 0; j < 32; ++j) {
      gm(i, j) = static_cast<double>(rng() % 2001) / 1000.0 - 1.0;
      gv(i, j) = static_cast<double>(rng() % 2001) / 1000.0 - 1.0;
    }

  EncodedImage enc;
  enc.mode_id = mode.id;
  enc.width = 320;
  enc.height = 240;
  enc.model_crc = 0xABCD1234;
  enc.global_desc = scfv_encode(gm, gv, gmm, mode);
  for (int i = 0; i < 20; ++i) {
    TernaryCode code;
    code.mode = static_cast<std::uint8_t>(mode.id);
    code.xq = static_cast<std::uint16_t>(rng() % 65536);
    code.yq = static_cast<std::uint16_t>(rng() % 65536);
    code.sigma_q = static_cast<std::uint8_t>(rng() % 256);
    code.theta_q = static_cast<std::uint8_t>(rng() % 256);
    code.symbols.resize(static_cast<std::size_t>(mode.elements));
    for (auto& s : code.symbols) s = static_cast<std::int8_t>(static_cast<int>(rng() % 3) - 1);
    enc.codes.push_back(std::move(code));
  }
  return enc;
}

ModelBundle tiny_bundle() {
  ModelBundle bundle;
  bundle.detector = ScaleSpaceConfig::defaults();
  bundle.select_n = 300;
  bundle.relevance = RelevanceModel::uniform();
  bundle.transforms = TransformPair::defaults();
  bundle.quantizer = QuantizerModel::neutral();
  bundle.pca.mean.setZero();
  bundle.pca.basis.setZero();
  for (int r = 0; r < 32; ++r) bundle.pca.basis(r, r) = 1.0;
  const int nc = 4;
  bundle.gmm.weights = Eigen::VectorXd::Constant(nc, 0.25);
  bundle.gmm.means = Eigen::MatrixXd::Zero(nc, 32);
  for (int i = 0; i < nc; ++i) bundle.gmm.means(i, 0) = i;
  bundle.gmm.stds = Eigen::MatrixXd::Ones(nc, 32);
  return bundle;
}

}  // namespace

TEST_SUITE("container") {

TEST_CASE("containers round-trip bit-exactly") {
  for (const char* mode_name : {"512B", "4K", "8K"}) {
    const EncodedImage enc = sample_container(7, mode_name);
    const auto bytes = serialize_container(enc);
    const EncodedImage back = parse_container(bytes);
    CHECK(back.mode_id == enc.mode_id);
    CHECK(back.width == enc.width);
    CHECK(back.height == enc.height);
    CHECK(back.model_crc == enc.model_crc);
    CHECK(back.global_desc.mask == enc.global_desc.mask);
    CHECK(back.global_desc.mean_planes == enc.global_desc.mean_planes);
    CHECK(back.global_desc.var_planes == enc.global_desc.var_planes);
    REQUIRE(back.codes.size() == enc.codes.size());
    for (std::size_t i = 0; i < enc.codes.size(); ++i)
      CHECK(back.codes[i].symbols == enc.codes[i].symbols);
    // Reserializing reproduces the exact byte stream.
    CHECK(serialize_container(back) == bytes);
  }
}

TEST_CASE("payload larger than the budget is rejected") {
  EncodedImage enc = sample_container(9, "512B");
  // 512B fits few codes; stuff it past the limit.
  while (enc.codes.size() < 60) enc.codes.push_back(enc.codes.front());
  CHECK_THROWS_AS(serialize_container(enc), DataError);
}

TEST_CASE("corrupted bytes fail the checksum") {
  auto bytes = serialize_container(sample_container(11));
  bytes[bytes.size() / 2] ^= 0x40;
  CHECK_THROWS_AS(parse_container(bytes), DataError);
}

TEST_CASE("magic and truncation are rejected") {
  auto bytes = serialize_container(sample_container(13));
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(parse_container(bad_magic), DataError);
  bytes.resize(10);
  CHECK_THROWS_AS(parse_container(bytes), DataError);
}

TEST_CASE("container files round-trip through disk") {
  const auto dir = std::filesystem::temp_directory_path() / "cdvz_tests";
  std::filesystem::create_directories(dir);
  const auto path = dir / "sample.cdvz";
  const EncodedImage enc = sample_container(15);
  save_container(enc, path);
  const EncodedImage back = load_container(path);
  CHECK(serialize_container(back) == serialize_container(enc));
}

TEST_CASE("model bundles serialize deterministically and round-trip") {
  const ModelBundle bundle = tiny_bundle();
  const std::string text = serialize_model(bundle);
  CHECK(text == serialize_model(bundle));

  const ModelBundle back = parse_model(text);
  CHECK(serialize_model(back) == text);
  CHECK(back.crc() == bundle.crc());
  CHECK(back.select_n == bundle.select_n);
  CHECK(back.gmm.components() == bundle.gmm.components());
  CHECK((back.transforms.a - bundle.transforms.a).cwiseAbs().maxCoeff() == 0.0);
  CHECK(back.transforms.scale == bundle.transforms.scale);
}

TEST_CASE("bundle section corruption is caught by the section checksum") {
  std::string text = serialize_model(tiny_bundle());
  const auto pos = text.find("components = 4");
  REQUIRE(pos != std::string::npos);
  text[pos + 13] = '5';
  CHECK_THROWS_AS(parse_model(text), DataError);
}

TEST_CASE("bundle files round-trip through disk") {
  const auto dir = std::filesystem::temp_directory_path() / "cdvz_tests";
  std::filesystem::create_directories(dir);
  const auto path = dir / "bundle.cdvzm";
  const ModelBundle bundle = tiny_bundle();
  save_model(bundle, path);
  const ModelBundle back = load_model(path);
  CHECK(serialize_model(back) == serialize_model(bundle));
}

TEST_CASE("unknown bundle versions are rejected") {
  CHECK_THROWS_AS(parse_model("CDVZ-MODEL 2\nend\n"), DataError);
  CHECK_THROWS_AS(parse_model("CDVZ-MODEL 1\nend\n"), DataError);  // missing sections
}

}  // TEST_SUITE
