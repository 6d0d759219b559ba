#include <doctest.h>
#include <sys/wait.h>

#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "bsplc/audio_io.hpp"
#include "bsplc/loss_channel.hpp"
#include "bsplc/synthetic.hpp"
#include "test_util.hpp"

using namespace bsplc;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string output;
};

Result run(const std::string& args, const fs::path& dir) {
  const fs::path log = dir / "cli_output.txt";
  const std::string cmd = std::string("\"") + BSPLC_CLI + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  Result r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(log);
  std::stringstream ss;
  ss << in.rdbuf();
  r.output = ss.str();
  return r;
}

std::string text_of(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

// A toy generator checkpoint produced through the train subcommand.
fs::path trained_checkpoint() {
  static const fs::path ckpt = [] {
    const auto dir = testutil::scratch_dir("cli_model");
    std::ofstream(dir / "t.cfg") << "preset = toy\nsegment_seconds = 0.06\nbatch_size = 1\nsynthetic_clips = 2\n"
                                    "synthetic_seconds = 0.2\ntotal_steps = 1\noutput_dir = "
                                 << (dir / "out").string() << "\n";
    const auto r = run("train --config " + q(dir / "t.cfg"), dir);
    REQUIRE_MESSAGE(r.code == 0, r.output);
    return dir / "out" / "generator.bin";
  }();
  return ckpt;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("help and usage errors") {
  const auto dir = testutil::scratch_dir("cli_usage");
  CHECK(run("--help", dir).code == 0);
  CHECK(run("", dir).code == 2);
  CHECK(run("simulate --packets 10", dir).code == 2);
  CHECK(run("frobnicate", dir).code == 2);
}

TEST_CASE("simulate writes deterministic traces and enforces the cap") {
  const auto dir = testutil::scratch_dir("cli_sim");
  auto r = run("simulate --packets 100 --p-gb 0 --p-bg 0.5 --out " + q(dir / "zero.txt"), dir);
  REQUIRE_MESSAGE(r.code == 0, r.output);
  const auto zero = read_trace(dir / "zero.txt");
  CHECK(zero.size() == 100);
  CHECK(zero.loss_rate() == 0.0);
  CHECK(r.output.find("p_gb = 0") != std::string::npos);
  CHECK(r.output.find("expected loss rate: 0") != std::string::npos);

  r = run("simulate --packets 100 --p-gb 0.3 --p-bg 0.2 --out " + q(dir / "high.txt"), dir);
  CHECK(r.code == 2);
  CHECK(r.output.find("exceeds") != std::string::npos);
  CHECK_FALSE(fs::exists(dir / "high.txt"));

  const std::string args = "simulate --packets 500 --p-gb 0.1 --p-bg 0.4 --seed 9 --out ";
  REQUIRE(run(args + q(dir / "a.txt"), dir).code == 0);
  REQUIRE(run(args + q(dir / "b.txt"), dir).code == 0);
  CHECK(text_of(dir / "a.txt") == text_of(dir / "b.txt"));
  CHECK(read_trace(dir / "a.txt").loss_rate() > 0.0);
}

TEST_CASE("apply zeroes lost packets and checks the trace length") {
  const auto dir = testutil::scratch_dir("cli_apply");
  const Waveform clean = synthetic_speech(0.1, 3);  // 5 packets
  write_wav(dir / "clean.wav", clean);
  LossTrace t;
  t.lost = {false, true, false, false, true};
  write_trace(dir / "t.txt", t);
  auto r = run("apply --in " + q(dir / "clean.wav") + " --trace " + q(dir / "t.txt") + " --out " + q(dir / "lossy.wav"), dir);
  REQUIRE_MESSAGE(r.code == 0, r.output);
  const Waveform lossy = read_wav(dir / "lossy.wav"), back = read_wav(dir / "clean.wav");
  REQUIRE(lossy.size() == back.size());
  for (std::size_t i = 0; i < lossy.size(); ++i)
    CHECK(lossy.samples[i] == (t.lost[i / kPacketSamples] ? 0.0 : back.samples[i]));

  LossTrace none;
  none.lost.assign(5, false);
  write_trace(dir / "none.txt", none);
  REQUIRE(run("apply --in " + q(dir / "clean.wav") + " --trace " + q(dir / "none.txt") + " --out " + q(dir / "same.wav"), dir).code == 0);
  CHECK(read_wav(dir / "same.wav").samples == back.samples);

  LossTrace shorter;
  shorter.lost.assign(3, false);
  write_trace(dir / "short.txt", shorter);
  r = run("apply --in " + q(dir / "clean.wav") + " --trace " + q(dir / "short.txt") + " --out " + q(dir / "x.wav"), dir);
  CHECK(r.code != 0);
  CHECK(r.output.find("packets") != std::string::npos);
  CHECK(run("apply --in " + q(dir / "missing.wav") + " --trace " + q(dir / "t.txt") + " --out " + q(dir / "x.wav"), dir).code == 1);
}

TEST_CASE("infer with no loss returns the input; splicing can be disabled") {
  const auto dir = testutil::scratch_dir("cli_infer");
  const auto ckpt = trained_checkpoint();
  const Waveform clean = synthetic_speech(0.2, 4);
  write_wav(dir / "clean.wav", clean);
  const Waveform ref = read_wav(dir / "clean.wav");
  auto r = run("infer --in " + q(dir / "clean.wav") + " --ckpt " + q(ckpt) + " --out " + q(dir / "out.wav"), dir);
  REQUIRE_MESSAGE(r.code == 0, r.output);
  CHECK(r.output.find("preset = toy") != std::string::npos);
  CHECK(testutil::max_abs_diff(read_wav(dir / "out.wav").samples, ref.samples) <= std::ldexp(1.0, -15));

  LossTrace t;
  t.lost = {false, false, true, true, false, false, false, false, false, false};
  write_trace(dir / "t.txt", t);
  const Waveform lossy = apply_trace(ref, t);
  write_wav(dir / "lossy.wav", lossy);
  REQUIRE(run("infer --in " + q(dir / "lossy.wav") + " --trace " + q(dir / "t.txt") + " --ckpt " + q(ckpt) + " --out " +
                  q(dir / "spliced.wav"),
              dir)
              .code == 0);
  REQUIRE(run("infer --in " + q(dir / "lossy.wav") + " --trace " + q(dir / "t.txt") + " --ckpt " + q(ckpt) +
                  " --no-splice --out " + q(dir / "raw.wav"),
              dir)
              .code == 0);
  const auto spliced = read_wav(dir / "spliced.wav"), raw = read_wav(dir / "raw.wav");
  CHECK(spliced.size() == lossy.size());
  CHECK(spliced.samples != raw.samples);
  // received packets away from a loss boundary are the input itself
  for (std::size_t i = 6 * kPacketSamples; i < 10 * kPacketSamples; ++i) CHECK(spliced.samples[i] == lossy.samples[i]);

  CHECK(run("infer --in " + q(dir / "lossy.wav") + " --ckpt " + q(dir / "nope.bin") + " --out " + q(dir / "o.wav"), dir).code == 1);
}

TEST_CASE("eval scores pairs, skips unmatched files and writes JSON") {
  const auto dir = testutil::scratch_dir("cli_eval");
  fs::create_directories(dir / "ref");
  fs::create_directories(dir / "deg");
  const Waveform a = synthetic_speech(0.2, 5);
  write_wav(dir / "ref" / "a.wav", a);
  write_wav(dir / "deg" / "a.wav", a);
  // deg = ref + an orthogonal residual of a quarter of its energy: SI-SDR = 10 log10(4)
  Waveform r, d;
  for (int i = 0; i < 960; ++i) {
    r.samples.push_back(i % 2 ? 0.0 : 0.5);
    d.samples.push_back(i % 2 ? 0.25 : 0.5);
  }
  write_wav(dir / "ref" / "b.wav", r);
  write_wav(dir / "deg" / "b.wav", d);
  write_wav(dir / "ref" / "c.wav", a);

  const auto res = run("eval --ref " + q(dir / "ref") + " --deg " + q(dir / "deg") + " --out " + q(dir / "r.json"), dir);
  REQUIRE_MESSAGE(res.code == 0, res.output);
  const auto j = nlohmann::json::parse(text_of(dir / "r.json"));
  CHECK(j["count"] == 2);
  CHECK(j["files"]["a.wav"]["si_sdr"].get<double>() == 60.0);
  CHECK(j["files"]["a.wav"]["plcpa"].get<double>() == 0.0);
  CHECK(j["files"]["a.wav"]["lsd_wide"].get<double>() == 0.0);
  CHECK(j["files"]["b.wav"]["si_sdr"].get<double>() == doctest::Approx(10.0 * std::log10(4.0)).epsilon(1e-9));
  REQUIRE(j["skipped"].size() == 1);
  CHECK(j["skipped"][0]["file"] == "c.wav");
  CHECK(j["mean"]["si_sdr"].get<double>() == doctest::Approx((60.0 + 10.0 * std::log10(4.0)) / 2.0));

  CHECK(run("eval --ref " + q(dir / "missing") + " --deg " + q(dir / "deg") + " --out " + q(dir / "x.json"), dir).code == 1);
}

TEST_CASE("info reports the model and rejects corrupt checkpoints") {
  const auto dir = testutil::scratch_dir("cli_info");
  auto r = run("info --ckpt " + q(trained_checkpoint()) + " --rtf-seconds 0.2", dir);
  REQUIRE_MESSAGE(r.code == 0, r.output);
  CHECK(r.output.find("parameters: 487961") != std::string::npos);
  CHECK(r.output.find("full-scale reference: 3.81M") != std::string::npos);
  CHECK(r.output.find("RTF") != std::string::npos);

  std::ofstream(dir / "junk.bin") << "definitely not a checkpoint";
  r = run("info --ckpt " + q(dir / "junk.bin"), dir);
  CHECK(r.code == 1);
  CHECK(r.output.find("bad magic") != std::string::npos);
}

TEST_CASE("train reports malformed configuration lines") {
  const auto dir = testutil::scratch_dir("cli_train");
  std::ofstream(dir / "bad.cfg") << "preset = toy\nthis is not valid\n";
  auto r = run("train --config " + q(dir / "bad.cfg"), dir);
  CHECK(r.code == 2);
  CHECK(r.output.find("bad.cfg:2:") != std::string::npos);

  std::ofstream(dir / "unknown.cfg") << "preset = toy\n\nlearning_rate = 3\n";
  r = run("train --config " + q(dir / "unknown.cfg"), dir);
  CHECK(r.code == 2);
  CHECK(r.output.find("unknown.cfg:3:") != std::string::npos);

  CHECK(run("train --config " + q(dir / "absent.cfg"), dir).code == 1);

  // the shared model fixture trains through the same subcommand
  CHECK(fs::exists(trained_checkpoint()));
  CHECK(text_of(trained_checkpoint().parent_path() / "losses.csv").rfind("step,plcpa", 0) == 0);
}

}
