#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <png.h>

#include "doctest.h"
#include "esdnet/config.hpp"
#include "esdnet/image_io.hpp"
#include "esdnet/model.hpp"
#include "esdnet/weights_io.hpp"
#include "oracles.hpp"

using namespace esdnet;
using oracles::bit_equal;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("esdnet_test_" + std::to_string(Rng(std::random_device{}()).next_u64() % 1000000000));
    fs::create_directories(path);
  }
  ~TempDir() { std::error_code ec; fs::remove_all(path, ec); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

std::vector<char> slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::vector<char>(std::istreambuf_iterator<char>(in),
                           std::istreambuf_iterator<char>());
}

void write_gray_png(const std::string& path) {
  FILE* f = std::fopen(path.c_str(), "wb");
  REQUIRE(f != nullptr);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  REQUIRE(setjmp(png_jmpbuf(png)) == 0);
  png_init_io(png, f);
  png_set_IHDR(png, info, 2, 2, 8, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_byte row0[2] = {0, 128};
  png_byte row1[2] = {255, 64};
  png_write_row(png, row0);
  png_write_row(png, row1);
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(f);
}

}  // namespace

TEST_CASE("weights survive a save and load bit for bit") {
  TempDir tmp;
  ModelConfig cfg;
  cfg.width_div = 4;
  const Model m = Model::build(cfg, 99);
  const std::string path = tmp.file("w.esdw");
  save_weights(path, m.names, m.values);

  const std::vector<NamedTensor> loaded = load_weights(path);
  REQUIRE(loaded.size() == m.names.size());
  for (std::size_t i = 0; i < loaded.size(); ++i) {
    CHECK(loaded[i].name == m.names[i]);
    CHECK(bit_equal(loaded[i].value, m.values[i]));
  }

  Model fresh = Model::build(cfg, 100);
  load_into(path, fresh.names, fresh.values);
  for (std::size_t i = 0; i < fresh.values.size(); ++i)
    CHECK(bit_equal(fresh.values[i], m.values[i]));
}

TEST_CASE("a truncated weights file fails the integrity check") {
  TempDir tmp;
  ModelConfig cfg;
  cfg.width_div = 4;
  const Model m = Model::build(cfg, 7);
  const std::string path = tmp.file("w.esdw");
  save_weights(path, m.names, m.values);
  const std::vector<char> bytes = slurp(path);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), std::streamsize(bytes.size() - 7));
  out.close();
  CHECK_THROWS_AS(load_weights(path), DataError);
}

TEST_CASE("a flipped payload byte fails the integrity check") {
  TempDir tmp;
  ModelConfig cfg;
  cfg.width_div = 4;
  const Model m = Model::build(cfg, 7);
  const std::string path = tmp.file("w.esdw");
  save_weights(path, m.names, m.values);
  std::vector<char> bytes = slurp(path);
  bytes[bytes.size() / 2] = char(bytes[bytes.size() / 2] ^ 0x40);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), std::streamsize(bytes.size()));
  out.close();
  CHECK_THROWS_AS(load_weights(path), DataError);
}

TEST_CASE("loading into the wrong architecture names the first bad parameter") {
  TempDir tmp;
  ModelConfig narrow;
  narrow.width_div = 4;
  const Model m = Model::build(narrow, 7);
  const std::string path = tmp.file("w.esdw");
  save_weights(path, m.names, m.values);

  ModelConfig wide;
  Model full = Model::build(wide, 7);
  CHECK_THROWS_WITH_AS(load_into(path, full.names, full.values),
                       doctest::Contains("head.conv.w"), DataError);

  // The target must be untouched after a failed load.
  const Model reference = Model::build(wide, 7);
  for (std::size_t i = 0; i < full.values.size(); ++i)
    CHECK(bit_equal(full.values[i], reference.values[i]));
}

TEST_CASE("missing and unexpected entries are reported by name") {
  TempDir tmp;
  ModelConfig cfg;
  cfg.width_div = 4;
  const Model m = Model::build(cfg, 7);

  std::vector<std::string> extra_names = m.names;
  std::vector<Tensor> extra_values = m.values;
  extra_names.push_back("spurious.w");
  extra_values.push_back(Tensor::full({2, 2}, 1.0f));
  const std::string extra_path = tmp.file("extra.esdw");
  save_weights(extra_path, extra_names, extra_values);
  Model target = Model::build(cfg, 8);
  CHECK_THROWS_WITH_AS(load_into(extra_path, target.names, target.values),
                       doctest::Contains("spurious.w"), DataError);

  std::vector<std::string> short_names(m.names.begin(), m.names.end() - 1);
  std::vector<Tensor> short_values(m.values.begin(), m.values.end() - 1);
  const std::string short_path = tmp.file("short.esdw");
  save_weights(short_path, short_names, short_values);
  CHECK_THROWS_WITH_AS(load_into(short_path, target.names, target.values),
                       doctest::Contains(m.names.back().c_str()), DataError);
}

TEST_CASE("a garbage file is rejected up front") {
  TempDir tmp;
  const std::string path = tmp.file("bad.esdw");
  std::ofstream(path) << "not a weights file at all";
  CHECK_THROWS_AS(load_weights(path), DataError);
  CHECK_THROWS_AS(load_weights(tmp.file("missing.esdw")), DataError);
}

TEST_CASE("png values round-trip within one quantization step") {
  TempDir tmp;
  Rng rng(55);
  const Tensor img = oracles::rand_tensor({1, 3, 9, 13}, rng, 0.0, 1.0);
  const std::string path = tmp.file("img.png");
  save_png(path, img);
  const Tensor back = load_png(path);
  REQUIRE(back.shape == img.shape);
  CHECK(oracles::max_abs_diff(back, img) <= 0.5 / 255.0 + 1e-7);
}

TEST_CASE("png save is idempotent after one quantization") {
  TempDir tmp;
  Rng rng(56);
  const Tensor img = oracles::rand_tensor({1, 3, 6, 6}, rng, 0.0, 1.0);
  const std::string a = tmp.file("a.png");
  save_png(a, img);
  const Tensor once = load_png(a);
  const std::string b = tmp.file("b.png");
  save_png(b, once);
  CHECK(bit_equal(load_png(b), once));
  CHECK(slurp(a) == slurp(b));
}

TEST_CASE("png preserves exact black, white and mid gray") {
  TempDir tmp;
  Tensor img({1, 3, 2, 2});
  img.data.assign(img.data.size(), 0.0f);
  img.at(0, 0, 0, 1) = 1.0f;
  img.at(0, 1, 0, 1) = 1.0f;
  img.at(0, 2, 0, 1) = 1.0f;
  for (int c = 0; c < 3; ++c) img.at(0, c, 1, 0) = 128.0f / 255.0f;
  const std::string path = tmp.file("levels.png");
  save_png(path, img);
  const Tensor back = load_png(path);
  for (int c = 0; c < 3; ++c) {
    CHECK(back.at(0, c, 0, 0) == 0.0f);
    CHECK(back.at(0, c, 0, 1) == 1.0f);
    CHECK(std::abs(back.at(0, c, 1, 0) - 128.0f / 255.0f) <= 1e-7f);
  }
}

TEST_CASE("png saving clamps out-of-range values") {
  TempDir tmp;
  Tensor img({1, 3, 1, 2});
  for (int c = 0; c < 3; ++c) {
    img.at(0, c, 0, 0) = -0.4f;
    img.at(0, c, 0, 1) = 1.7f;
  }
  const std::string path = tmp.file("clamp.png");
  save_png(path, img);
  const Tensor back = load_png(path);
  for (int c = 0; c < 3; ++c) {
    CHECK(back.at(0, c, 0, 0) == 0.0f);
    CHECK(back.at(0, c, 0, 1) == 1.0f);
  }
}

TEST_CASE("non-png and gray png files are rejected") {
  TempDir tmp;
  const std::string text = tmp.file("fake.png");
  std::ofstream(text) << "plain text";
  CHECK_THROWS_AS(load_png(text), DataError);
  CHECK_THROWS_AS(load_png(tmp.file("absent.png")), DataError);

  const std::string gray = tmp.file("gray.png");
  write_gray_png(gray);
  CHECK_THROWS_WITH_AS(load_png(gray), doctest::Contains("RGB"), DataError);
}

TEST_CASE("config files set every section and reject unknown keys") {
  TempDir tmp;
  const std::string path = tmp.file("run.cfg");
  std::ofstream(path) << "# comment line\n"
                         "model.variant = large\n"
                         "model.width_div = 2\n"
                         "\n"
                         "train.lr_max = 1e-3\n"
                         "train.total_epochs = 9\n"
                         "train.batch = 4\n"
                         "loss.lambda = 0.5\n"
                         "loss.perceptual_block = 2\n"
                         "moire.amp_r = 0.25\n"
                         "moire.fx = 0.11\n"
                         "moire.seed = 77\n"
                         "moire.sample = 0\n";
  const RunConfig cfg = RunConfig::from_file(path);
  CHECK(cfg.model.variant == "large");
  CHECK(cfg.model.width_div == 2);
  CHECK(cfg.train.lr_max == 1e-3);
  CHECK(cfg.train.total_epochs == 9);
  CHECK(cfg.train.batch == 4);
  CHECK(cfg.loss.lambda == 0.5);
  CHECK(cfg.loss.perceptual_block == 2);
  CHECK(cfg.moire.amp[0] == 0.25);
  CHECK(cfg.moire.fx == 0.11);
  CHECK(cfg.moire_seed == 77);
  CHECK_FALSE(cfg.moire_sample);

  RunConfig direct;
  CHECK_THROWS_WITH_AS(direct.set("model.depth", "9"),
                       doctest::Contains("model.depth"), ContractError);
  CHECK_THROWS_AS(direct.set("train.batch", "not_a_number"), ContractError);
  const std::string bad = tmp.file("bad.cfg");
  std::ofstream(bad) << "train.lr_max\n";
  CHECK_THROWS_AS(RunConfig::from_file(bad), ContractError);
  CHECK_THROWS_AS(RunConfig::from_file(tmp.file("nope.cfg")), DataError);
}
