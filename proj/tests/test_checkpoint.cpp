#include <doctest.h>

#include <cstring>
#include <fstream>
#include <functional>

#include "bsplc/checkpoint.hpp"
#include "bsplc/config.hpp"
#include "bsplc/synthetic.hpp"
#include "test_util.hpp"

using namespace bsplc;

namespace {

std::vector<char> slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void dump(const std::filesystem::path& p, const std::vector<char>& bytes) {
  std::ofstream(p, std::ios::binary).write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const std::exception& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_SUITE("checkpoint") {

TEST_CASE("tensors and metadata round trip bit-exactly") {
  const auto dir = testutil::scratch_dir("ckpt_rt");
  Checkpoint ck;
  ck.meta["kind"] = "test";
  ck.meta["empty"] = "";
  ck.tensors.push_back({"a", {2, 3}, testutil::random_vec(6, 1)});
  ck.tensors.push_back({"b/c", {1}, {-0.0}});
  ck.tensors.push_back({"scalar", {}, {3.5}});
  ck.save(dir / "x.ckpt");
  const auto back = Checkpoint::load(dir / "x.ckpt");
  CHECK(back.meta == ck.meta);
  REQUIRE(back.tensors.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back.tensors[i].name == ck.tensors[i].name);
    CHECK(back.tensors[i].shape == ck.tensors[i].shape);
    CHECK(std::memcmp(back.tensors[i].values.data(), ck.tensors[i].values.data(), ck.tensors[i].values.size() * 8) == 0);
  }
  CHECK(back.find("b/c") != nullptr);
  CHECK(back.find("zzz") == nullptr);
}

TEST_CASE("generator save and load reproduce the model") {
  const auto dir = testutil::scratch_dir("ckpt_gen");
  const Generator g(GeneratorConfig::toy(), 5);
  save_generator(dir / "g.bin", g);
  const Generator h = load_generator(dir / "g.bin");
  CHECK(h.config() == g.config());
  CHECK(h.params().checksum() == g.params().checksum());

  Generator other(GeneratorConfig::toy(), 99);
  CHECK(other.params().checksum() != g.params().checksum());
  load_generator_into(dir / "g.bin", other);
  CHECK(other.params().checksum() == g.params().checksum());

  Generator base(GeneratorConfig::base(), 1);
  const auto msg = error_of([&] { load_generator_into(dir / "g.bin", base); });
  CHECK(msg.find("does not match") != std::string::npos);
}

TEST_CASE("damaged files are rejected with a reason") {
  const auto dir = testutil::scratch_dir("ckpt_bad");
  const Generator g(GeneratorConfig::toy(), 6);
  save_generator(dir / "g.bin", g);
  const auto good = slurp(dir / "g.bin");

  auto bytes = good;
  bytes[0] = 'X';
  dump(dir / "magic.bin", bytes);
  CHECK(error_of([&] { Checkpoint::load(dir / "magic.bin"); }).find("bad magic") != std::string::npos);

  bytes = good;
  bytes[8] = 2;
  dump(dir / "version.bin", bytes);
  CHECK(error_of([&] { Checkpoint::load(dir / "version.bin"); }).find("unsupported checkpoint version 2") != std::string::npos);

  bytes = good;
  bytes[bytes.size() / 2] ^= 0x10;
  dump(dir / "flip.bin", bytes);
  const auto msg = error_of([&] { Checkpoint::load(dir / "flip.bin"); });
  CHECK(msg.find("corrupt") != std::string::npos);
  CHECK(msg.find("version 1") != std::string::npos);

  bytes = good;
  bytes.resize(bytes.size() - 100);
  dump(dir / "short.bin", bytes);
  CHECK_THROWS_AS(Checkpoint::load(dir / "short.bin"), CheckpointError);
  CHECK_THROWS_AS(Checkpoint::load(dir / "absent.bin"), CheckpointError);

  Checkpoint partial = Checkpoint::load(dir / "g.bin");
  partial.tensors.pop_back();
  Generator target(GeneratorConfig::toy(), 1);
  CHECK_THROWS_AS(partial.restore_params(target.params(), ""), CheckpointError);

  Checkpoint bare;
  CHECK_THROWS_AS(generator_from_checkpoint(bare), CheckpointError);
}

}

TEST_SUITE("config") {

TEST_CASE("parsing accepts comments and whitespace") {
  const auto f = ConfigFile::parse("# header\n\n  a = 1   # trailing\nb=two words\nlist = 1, 2 ,3\nflag = true\n");
  CHECK(f.get_int("a", 0) == 1);
  CHECK(f.get_string("b", "") == "two words");
  CHECK(f.get_int_list("list", {}) == std::vector<int>{1, 2, 3});
  CHECK(f.get_bool("flag", false));
  CHECK(f.get_double("missing", 0.25) == 0.25);
  CHECK_NOTHROW(f.reject_unused());
}

TEST_CASE("errors carry the line number") {
  auto where = [](const std::string& text) {
    return error_of([&] {
      const auto f = ConfigFile::parse(text, "t.cfg");
      (void)f.get_int("n", 0);
      (void)f.get_double("x", 0);
      (void)f.get_bool("b", false);
      f.reject_unused();
    });
  };
  CHECK(where("n = 1\n\nthis line is wrong\n").find("t.cfg:3:") != std::string::npos);
  CHECK(where("n = 1\nn = 2\n").find("t.cfg:2: duplicate key 'n' (first on line 1)") != std::string::npos);
  CHECK(where("n = 1.5\n").find("t.cfg:1: n: expected an integer") != std::string::npos);
  CHECK(where("# c\nx = abc\n").find("t.cfg:2: x:") != std::string::npos);
  CHECK(where("b = maybe\n").find("t.cfg:1: b:") != std::string::npos);
  CHECK(where("n = 1\nmystery = 3\n").find("t.cfg:2: mystery: unknown key") != std::string::npos);
  CHECK(where("n =\n").find("t.cfg:1: missing value") != std::string::npos);
  CHECK(where("bad key = 1\n").find("t.cfg:1: invalid key") != std::string::npos);
}

TEST_CASE("generator configuration from a file") {
  const auto f = ConfigFile::parse("preset = base\nftlstm_hidden = 64\n");
  const auto g = generator_config_from(f);
  auto want = GeneratorConfig::base();
  want.ftlstm_hidden = 64;
  CHECK(g == want);
  CHECK_THROWS_AS(generator_config_from(ConfigFile::parse("preset = enormous\n")), ConfigError);
  CHECK_THROWS_AS(generator_config_from(ConfigFile::parse("encoder_channels = 1,2,3\n")), ConfigError);

  // describe() output parses back to the same configuration
  auto custom = GeneratorConfig::toy();
  custom.encoder_channels = {4, 8, 12, 16};
  custom.include_loss_flag_input = false;
  const auto parsed = ConfigFile::parse(custom.describe());
  CHECK(generator_config_from(parsed) == custom);
  CHECK_NOTHROW(parsed.reject_unused());
}

}
