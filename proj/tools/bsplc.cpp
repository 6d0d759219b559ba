// bsplc: packet-loss simulation, concealment training, inference and evaluation.
//
// Exit codes: 0 success, 1 I/O error, 2 invalid input or configuration.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "bsplc/checkpoint.hpp"
#include "bsplc/config.hpp"
#include "bsplc/inference.hpp"
#include "bsplc/loss_channel.hpp"
#include "bsplc/losses.hpp"
#include "bsplc/metrics.hpp"
#include "bsplc/training.hpp"

namespace fs = std::filesystem;
using namespace bsplc;

namespace {

// Reference size of the full-scale model, printed next to the base preset.
constexpr double kReferenceParams = 3.81e6;

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void need_file(const std::string& path) {
  if (!fs::is_regular_file(path)) throw IoError("no such file: " + path);
}

void need_dir(const std::string& path) {
  if (!fs::is_directory(path)) throw IoError("no such directory: " + path);
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

struct SimulateArgs {
  long packets = 0;
  double p_gb = 0.0, p_bg = 1.0, loss_good = 0.0, loss_bad = 1.0;
  std::uint64_t seed = 0;
  std::string out;
};

int run_simulate(const SimulateArgs& a) {
  std::cout << "simulate: packets = " << a.packets << ", p_gb = " << a.p_gb << ", p_bg = " << a.p_bg
            << ", loss_good = " << a.loss_good << ", loss_bad = " << a.loss_bad << ", seed = " << a.seed
            << ", out = " << a.out << "\n";
  if (a.packets < 1) throw std::invalid_argument("--packets must be >= 1");
  GEParams ge;
  ge.p_gb = a.p_gb;
  ge.p_bg = a.p_bg;
  ge.loss_good = a.loss_good;
  ge.loss_bad = a.loss_bad;
  ge.seed = a.seed;
  ge.validate();
  const double expected = expected_loss_rate(ge);
  std::cout << "expected loss rate: " << num(expected) << "\n";
  const LossTrace tr = sample_trace(ge, static_cast<std::size_t>(a.packets));
  write_trace(a.out, tr);
  std::cout << "realized loss rate: " << num(tr.loss_rate()) << "\n";
  return 0;
}

struct ApplyArgs {
  std::string in, trace, out;
};

int run_apply(const ApplyArgs& a) {
  std::cout << "apply: in = " << a.in << ", trace = " << a.trace << ", out = " << a.out << "\n";
  need_file(a.in);
  need_file(a.trace);
  const Waveform w = read_wav(a.in);
  const LossTrace tr = read_trace(a.trace);
  const Waveform lossy = apply_trace(w, tr);
  write_wav(a.out, lossy);
  std::cout << "lost packets: " << std::count(tr.lost.begin(), tr.lost.begin() + packets_for(w.size()), true) << " of "
            << packets_for(w.size()) << "\n";
  return 0;
}

struct TrainArgs {
  std::string config, resume;
};

int run_train(const TrainArgs& a) {
  need_file(a.config);
  if (!a.resume.empty()) need_file(a.resume);
  const TrainingConfig cfg = TrainingConfig::from_file(a.config);
  run_training(cfg, a.resume, std::cout);
  return 0;
}

struct InferArgs {
  std::string in, trace, ckpt, out;
  bool no_splice = false;
  int decay_threshold = 7;
};

int run_infer(const InferArgs& a) {
  std::cout << "infer: in = " << a.in << ", trace = " << (a.trace.empty() ? "(detect all-zero packets)" : a.trace)
            << ", ckpt = " << a.ckpt << ", out = " << a.out << ", splice = " << (a.no_splice ? "false" : "true")
            << ", decay_threshold = " << a.decay_threshold << "\n";
  need_file(a.in);
  need_file(a.ckpt);
  if (!a.trace.empty()) need_file(a.trace);
  const Waveform lossy = read_wav(a.in);
  const Generator gen = load_generator(a.ckpt);
  std::cout << "model: preset = " << gen.config().preset << ", parameters = " << gen.count_parameters() << "\n";
  std::optional<LossTrace> tr;
  if (!a.trace.empty()) tr = read_trace(a.trace);
  DecayPolicy decay;
  decay.threshold_packets = a.decay_threshold;
  SpliceConfig sc;
  sc.enabled = !a.no_splice;
  const Waveform out = conceal(gen, lossy, tr ? &*tr : nullptr, decay, sc);
  write_wav(a.out, out);
  std::cout << "wrote " << out.size() << " samples to " << a.out << "\n";
  return 0;
}

struct EvalArgs {
  std::string ref, deg, out;
};

nlohmann::json evaluate_pair(const Waveform& deg, const Waveform& ref) {
  const spectral::StftConfig sc;
  const auto es = spectral::stft(deg, sc), rs = spectral::stft(ref, sc);
  nlohmann::json j;
  j["si_sdr"] = metrics::si_sdr_capped(deg.samples, ref.samples);
  j["plcpa"] = plcpa_loss(es, rs, sc.compression);
  j["lsd_wide"] = metrics::log_spectral_distance(es, rs, 0, spectral::kWideBins);
  j["lsd_high"] = metrics::log_spectral_distance(es, rs, spectral::kWideBins, spectral::kBins);
  return j;
}

int run_eval(const EvalArgs& a) {
  std::cout << "eval: ref = " << a.ref << ", deg = " << a.deg << ", out = " << a.out << "\n";
  need_dir(a.ref);
  need_dir(a.deg);
  std::vector<fs::path> refs;
  for (const auto& e : fs::directory_iterator(a.ref))
    if (e.is_regular_file() && e.path().extension() == ".wav") refs.push_back(e.path());
  std::sort(refs.begin(), refs.end());

  nlohmann::json report;
  report["files"] = nlohmann::json::object();
  report["skipped"] = nlohmann::json::array();
  const char* keys[] = {"si_sdr", "plcpa", "lsd_wide", "lsd_high"};
  double sums[4] = {0, 0, 0, 0};
  int evaluated = 0;
  for (const auto& r : refs) {
    const std::string name = r.filename().string();
    const fs::path d = fs::path(a.deg) / r.filename();
    auto skip = [&](const std::string& why) { report["skipped"].push_back({{"file", name}, {"reason", why}}); };
    if (!fs::exists(d)) {
      skip("no degraded counterpart");
      continue;
    }
    try {
      const Waveform rw = read_wav(r), dw = read_wav(d);
      if (rw.size() != dw.size()) {
        skip("length mismatch");
        continue;
      }
      const auto j = evaluate_pair(dw, rw);
      report["files"][name] = j;
      for (int k = 0; k < 4; ++k) sums[k] += j[keys[k]].get<double>();
      ++evaluated;
    } catch (const std::exception& e) {
      skip(e.what());
    }
  }
  nlohmann::json mean = nlohmann::json::object();
  if (evaluated > 0)
    for (int k = 0; k < 4; ++k) mean[keys[k]] = sums[k] / evaluated;
  report["mean"] = mean;
  report["count"] = evaluated;
  std::FILE* f = std::fopen(a.out.c_str(), "w");
  if (!f) throw IoError("cannot write " + a.out);
  const std::string text = report.dump(2) + "\n";
  const bool ok = std::fwrite(text.data(), 1, text.size(), f) == text.size();
  std::fclose(f);
  if (!ok) throw IoError("write failed: " + a.out);
  std::cout << "evaluated " << evaluated << " file(s), skipped " << report["skipped"].size() << "\n";
  if (evaluated > 0) std::cout << "mean SI-SDR " << num(mean["si_sdr"].get<double>()) << " dB\n";
  return 0;
}

struct InfoArgs {
  std::string ckpt;
  double seconds = 10.0;
};

int run_info(const InfoArgs& a) {
  std::cout << "info: ckpt = " << a.ckpt << ", rtf_seconds = " << a.seconds << "\n";
  need_file(a.ckpt);
  const Generator gen = load_generator(a.ckpt);
  std::cout << gen.config().describe();
  std::cout << "parameters: " << gen.count_parameters() << "\n";
  const Generator base(GeneratorConfig::base(), 0);
  std::cout << "base preset parameters: " << base.count_parameters() << " (full-scale reference: "
            << num(kReferenceParams / 1e6) << "M)\n";
  const double rtf = measure_rtf(gen, a.seconds, 3);
  std::cout << "single-thread RTF on " << a.seconds << " s: " << num(rtf) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Packet loss concealment toolkit for 48 kHz speech"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* c_sim = app.add_subcommand("simulate", "Sample a Gilbert-Elliott loss trace");
  c_sim->add_option("--packets", sim.packets, "Number of 20 ms packets")->required();
  c_sim->add_option("--p-gb", sim.p_gb, "Good -> Bad transition probability")->required();
  c_sim->add_option("--p-bg", sim.p_bg, "Bad -> Good transition probability")->required();
  c_sim->add_option("--loss-good", sim.loss_good, "Loss probability in the Good state")->capture_default_str();
  c_sim->add_option("--loss-bad", sim.loss_bad, "Loss probability in the Bad state")->capture_default_str();
  c_sim->add_option("--seed", sim.seed, "Random seed")->capture_default_str();
  c_sim->add_option("--out", sim.out, "Output trace file")->required();

  ApplyArgs app_args;
  auto* c_apply = app.add_subcommand("apply", "Zero the lost packets of a WAV file");
  c_apply->add_option("--in", app_args.in, "Clean 48 kHz mono WAV")->required();
  c_apply->add_option("--trace", app_args.trace, "Loss trace file")->required();
  c_apply->add_option("--out", app_args.out, "Lossy WAV output")->required();

  TrainArgs tr;
  auto* c_train = app.add_subcommand("train", "Train a concealment model");
  c_train->add_option("--config", tr.config, "Training configuration (key = value)")->required();
  c_train->add_option("--resume", tr.resume, "Training checkpoint to resume from");

  InferArgs inf;
  auto* c_infer = app.add_subcommand("infer", "Conceal losses in a WAV file");
  c_infer->add_option("--in", inf.in, "Lossy 48 kHz mono WAV")->required();
  c_infer->add_option("--trace", inf.trace, "Loss trace; without it all-zero packets count as lost");
  c_infer->add_option("--ckpt", inf.ckpt, "Generator or training checkpoint")->required();
  c_infer->add_option("--out", inf.out, "Concealed WAV output")->required();
  c_infer->add_flag("--no-splice", inf.no_splice, "Keep generated audio in received packets");
  c_infer->add_option("--decay-threshold", inf.decay_threshold, "Lost packets before the gain starts to decay")
      ->capture_default_str()
      ->check(CLI::NonNegativeNumber);

  EvalArgs ev;
  auto* c_eval = app.add_subcommand("eval", "Objective scores of degraded/concealed files against references");
  c_eval->add_option("--ref", ev.ref, "Directory of reference WAVs")->required();
  c_eval->add_option("--deg", ev.deg, "Directory of files to score, matched by name")->required();
  c_eval->add_option("--out", ev.out, "JSON report")->required();

  InfoArgs info;
  auto* c_info = app.add_subcommand("info", "Model size and real-time factor");
  c_info->add_option("--ckpt", info.ckpt, "Generator or training checkpoint")->required();
  c_info->add_option("--rtf-seconds", info.seconds, "Audio duration for the RTF measurement")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*c_sim) return run_simulate(sim);
    if (*c_apply) return run_apply(app_args);
    if (*c_train) return run_train(tr);
    if (*c_infer) return run_infer(inf);
    if (*c_eval) return run_eval(ev);
    if (*c_info) return run_info(info);
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const AudioError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const CheckpointError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::ios_base::failure& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    // configuration, channel, shape and loss errors
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
