#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "ldsa/checkpoint.hpp"

using namespace ldsa;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("ldsa-test-" + std::to_string(std::rand()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("config json round-trips with exactly the documented fields") {
  EncoderConfig cfg;
  cfg.variant = Variant::Ha;
  cfg.n_blocks = 12;
  cfg.d = 320;
  cfg.h = 4;
  cfg.c = 15;
  cfg.conv_kernel = 15;
  cfg.ffn_inner = 1280;
  cfg.t_max = 2048;
  cfg.feat_dim = 40;

  const std::string text = config_to_json(cfg);
  for (const char* field : {"\"variant\"", "\"n_blocks\"", "\"d\"", "\"h\"", "\"c\"",
                            "\"conv_kernel\"", "\"ffn_inner\"", "\"t_max\"", "\"feat_dim\""}) {
    CHECK(text.find(field) != std::string::npos);
  }
  CHECK(text == config_to_json(cfg));  // deterministic field ordering

  const EncoderConfig back = config_from_json(text);
  CHECK(back.variant == cfg.variant);
  CHECK(back.n_blocks == cfg.n_blocks);
  CHECK(back.d == cfg.d);
  CHECK(back.h == cfg.h);
  CHECK(back.c == cfg.c);
  CHECK(back.conv_kernel == cfg.conv_kernel);
  CHECK(back.ffn_inner == cfg.ffn_inner);
  CHECK(back.t_max == cfg.t_max);
  CHECK(back.feat_dim == cfg.feat_dim);
}

TEST_CASE("attention params round-trip through manifest plus csv payloads") {
  TempDir dir;
  Rng rng(21);

  SUBCASE("sa") {
    const SaParams p = init_sa_params(8, 2, rng);
    save_sa_params(p, (dir.path / "sa").string());
    const SaParams back = load_sa_params((dir.path / "sa").string());
    REQUIRE(back.heads() == 2);
    for (std::size_t i = 0; i < 2; ++i) {
      CHECK(max_abs_diff(back.wq[i], p.wq[i]) == 0.0);
      CHECK(max_abs_diff(back.wk[i], p.wk[i]) == 0.0);
      CHECK(max_abs_diff(back.wv[i], p.wv[i]) == 0.0);
    }
    CHECK(max_abs_diff(back.wo, p.wo) == 0.0);
  }
  SUBCASE("dsa") {
    const DsaParams p = init_dsa_params(8, 2, 32, rng);
    save_dsa_params(p, (dir.path / "dsa").string());
    const DsaParams back = load_dsa_params((dir.path / "dsa").string());
    CHECK(back.t_max == 32);
    CHECK(max_abs_diff(back.w2[1], p.w2[1]) == 0.0);
  }
  SUBCASE("ldsa") {
    const LdsaParams p = init_ldsa_params(8, 4, 5, rng);
    save_ldsa_params(p, (dir.path / "ldsa").string());
    const LdsaParams back = load_ldsa_params((dir.path / "ldsa").string());
    CHECK(back.context == 5);
    CHECK(max_abs_diff(back.w1[3], p.w1[3]) == 0.0);
  }
  SUBCASE("variant mismatch is rejected") {
    const SaParams p = init_sa_params(8, 2, rng);
    save_sa_params(p, (dir.path / "sa").string());
    CHECK_THROWS(load_dsa_params((dir.path / "sa").string()));
  }
}

TEST_CASE("encoder checkpoints reproduce the forward pass bit for bit") {
  TempDir dir;
  EncoderConfig cfg;
  cfg.variant = Variant::Ha;
  cfg.n_blocks = 2;
  cfg.d = 16;
  cfg.h = 2;
  cfg.c = 5;
  cfg.conv_kernel = 5;
  cfg.ffn_inner = 32;
  cfg.t_max = 16;
  cfg.feat_dim = 12;

  Rng rng(33);
  const EncoderParams p = init_encoder_params(cfg, rng);
  const Matrix features = rng.uniform_matrix(24, cfg.feat_dim, -1.0, 1.0);
  const Matrix y = encoder_forward(features, cfg, p);

  save_encoder_params(cfg, p, (dir.path / "enc").string());
  const EncoderParams back = load_encoder_params(cfg, (dir.path / "enc").string());
  CHECK(max_abs_diff(encoder_forward(features, cfg, back), y) == 0.0);

  // Manifest names carry the block indices.
  std::ifstream mf(dir.path / "enc" / "manifest.json");
  const std::string manifest((std::istreambuf_iterator<char>(mf)),
                             std::istreambuf_iterator<char>());
  CHECK(manifest.find("block0.sa.wq0") != std::string::npos);
  CHECK(manifest.find("block1.ldsa.w2_1") != std::string::npos);
  CHECK(manifest.find("frontend.proj") != std::string::npos);
}

TEST_CASE("encoder checkpoint loading rejects the wrong variant") {
  TempDir dir;
  EncoderConfig cfg;
  cfg.variant = Variant::Sa;
  cfg.n_blocks = 1;
  cfg.d = 8;
  cfg.h = 2;
  cfg.c = 3;
  cfg.conv_kernel = 3;
  cfg.ffn_inner = 16;
  cfg.t_max = 8;
  cfg.feat_dim = 8;
  Rng rng(5);
  save_encoder_params(cfg, init_encoder_params(cfg, rng), (dir.path / "enc").string());
  EncoderConfig other = cfg;
  other.variant = Variant::Ldsa;
  CHECK_THROWS(load_encoder_params(other, (dir.path / "enc").string()));
}
