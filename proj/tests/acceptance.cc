// Acceptance run: one PASS/FAIL line per criterion, with measured values.
//
//   acceptance [--only N]...
//
// Exit status is 0 when every selected criterion passes or is listed in
// kKnownFailures; a known failure is still printed as FAIL.

#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <string>

#include "monoref/cli.h"
#include "monoref/container.h"
#include "monoref/error.h"
#include "monoref/geometry.h"
#include "monoref/losses.h"
#include "monoref/metrics.h"
#include "monoref/pointmap.h"
#include "monoref/refinement.h"
#include "monoref/synth.h"
#include "monoref/training.h"
#include "op_cases.h"
#include "test_util.h"

namespace monoref {
namespace {

using testing::RandomPoints;
using testing::RandomRecords;
using testing::RandomRotation;
using testing::RandomTensor;
using testing::RandomVec;

const std::set<int> kKnownFailures = {8};

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string Num(double v) {
  std::ostringstream os;
  os << std::setprecision(4) << v;
  return os.str();
}

// ---------------------------------------------------------------------------

Outcome Umeyama100() {
  double worst_objective = 0.0, worst_param = 0.0;
  int trials = 0;
  for (int t = 0; t < 100; ++t) {
    Rng rng(MixSeed(1, t));
    const bool rigid = t % 2 == 1;
    const bool outliers = (t / 2) % 2 == 1;
    const Sim3 truth{rigid ? 1.0 : std::exp(rng.Uniform(-1.5, 1.5)),
                     RandomRotation(rng), RandomVec(rng, 2.0)};
    PointList src = RandomPoints(rng, 40);
    PointList dst = ApplySim3(truth, src);
    std::vector<double> w(src.size());
    for (double& x : w) x = rng.Uniform(0.1, 2.0);
    if (outliers) {
      for (int k = 0; k < 10; ++k) {
        src.push_back(RandomVec(rng, 3.0));
        dst.push_back(RandomVec(rng, 30.0));
        w.push_back(0.0);
      }
    }
    const Sim3 fit = Umeyama(
        src, dst, w, rigid ? UmeyamaMode::kRigid : UmeyamaMode::kSimilarity);
    worst_objective =
        std::max(worst_objective, UmeyamaObjective(fit, src, dst, w));
    worst_param = std::max({worst_param, std::abs(fit.scale - truth.scale),
                            (fit.rotation - truth.rotation).norm(),
                            (fit.translation - truth.translation).norm()});
    ++trials;
  }
  return {worst_objective <= 1e-9 && worst_param <= 1e-9,
          std::to_string(trials) + " trials, max objective " +
              Num(worst_objective) + ", max parameter error " + Num(worst_param)};
}

Outcome GradChecks() {
  double worst_op = 0.0;
  std::string worst_name;
  const auto ops = testing::OpCases();
  for (std::size_t i = 0; i < ops.size(); ++i) {
    for (int point = 0; point < 20; ++point) {
      const double e = testing::OpGradientError(ops[i], static_cast<int>(i), point);
      if (e > worst_op) {
        worst_op = e;
        worst_name = ops[i].name;
      }
    }
  }
  RefineConfig cfg;
  cfg.hidden_channels = 4;
  cfg.cond_channels = 4;
  const PreparedScene scene = PrepareScene(MakeScene(3, 8, 8));
  RefineWeights w = RefineWeights::Initialize(cfg, 21);
  Rng rng(22);
  testing::PerturbZeroInit(w, rng);
  std::vector<Tensor> params;
  w.Visit([&](const std::string&, const Tensor& t) { params.push_back(t); });
  double worst_composite = 0.0;
  for (int slot = -2; slot < static_cast<int>(params.size()); ++slot) {
    const Tensor x = slot == -1   ? scene.inputs[0].pair.ToTensor()
                     : slot == -2 ? scene.inputs[0].confidence.ToTensor()
                                  : params[slot];
    const ScalarFn f = [&](Graph& g, NodeId in) {
      return testing::CompositeLoss(g, in, slot, scene, w);
    };
    worst_composite = std::max(worst_composite, GradCheck(f, x));
  }
  return {worst_op <= 1e-4 && worst_composite <= 1e-4,
          std::to_string(ops.size()) + " ops x 20 points, worst op " +
              Num(worst_op) + " (" + worst_name + "), refine+loss composite " +
              Num(worst_composite) + " over " + std::to_string(params.size() + 2) +
              " inputs"};
}

Outcome AlignRoundTrip() {
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const SceneFixture fx = MakeScene(seed, 32, 32, NoiseSpec::Sim3Only());
    for (const ViewData& v : fx.views) {
      const AlignedMono a = AlignMonoToPair(v.mono, v.pair, v.confidence);
      worst = std::max(worst, PointmapRms(a.aligned, v.gt_world));
    }
  }
  return {worst <= 1e-9, "20 seeds, max post-alignment RMS " + Num(worst)};
}

Outcome LossAlgebra() {
  const std::vector<double> iw = IterationWeights(2, 0.9);
  const bool weights_ok = iw.size() == 2 && iw[0] == 0.9 && iw[1] == 1.0;
  double worst_zero = 0.0, worst_drift = 0.0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const SceneFixture fx = MakeScene(seed, 16, 16);
    std::vector<Pointmap> gt{fx.views[0].gt_world, fx.views[1].gt_world};
    std::vector<std::vector<Pointmap>> at_gt{{gt[0], gt[0]}, {gt[1], gt[1]}};
    worst_zero = std::max(worst_zero, std::abs(LossRefine(at_gt, gt, LossConfig{})));
    std::vector<std::vector<Pointmap>> preds{
        {fx.views[0].pair, fx.views[0].mono},
        {fx.views[1].pair, fx.views[1].pair}};
    std::vector<std::vector<Pointmap>> scaled = preds;
    std::vector<Pointmap> gt_scaled;
    for (auto& view : scaled)
      for (Pointmap& p : view) p = p.Scaled(10.0);
    for (const Pointmap& g : gt) gt_scaled.push_back(g.Scaled(10.0));
    worst_drift = std::max(worst_drift,
                           std::abs(LossRefine(preds, gt, LossConfig{}) -
                                    LossRefine(scaled, gt_scaled, LossConfig{})));
  }
  return {weights_ok && worst_zero == 0.0 && worst_drift <= 1e-12,
          std::string("weights {") + Num(iw[0]) + ", " + Num(iw[1]) +
              "}, loss at GT " + Num(worst_zero) + ", x10 drift " +
              Num(worst_drift)};
}

Outcome GruInvariants() {
  RefineConfig c;
  c.hidden_channels = 4;
  c.cond_channels = 4;
  Rng rng(5);
  int calls = 0;
  bool inside = true;
  for (int trial = 0; trial < 200; ++trial) {
    RefineWeights w = RefineWeights::Initialize(c, rng.Next());
    w.VisitMutable([&](const std::string&, Tensor& t) {
      t = RandomTensor(rng, t.shape(), -3.0, 3.0);
    });
    Tensor h = RandomTensor(rng, {1, c.hidden_channels, 3, 3}, -0.999, 0.999);
    for (int step = 0; step < 5; ++step, ++calls) {
      const GruStepResult r =
          GruStep(h, RandomTensor(rng, {1, c.cond_channels, 3, 3}, -5, 5), w);
      for (double v : r.hidden.data()) inside = inside && v > -1.0 && v < 1.0;
      for (double v : r.update_gate.data()) inside = inside && v > 0.0 && v < 1.0;
      for (double v : r.reset_gate.data()) inside = inside && v > 0.0 && v < 1.0;
      h = r.hidden;
    }
  }
  RefineWeights w = RefineWeights::Initialize(c, 2);
  w.gru.update_kernel = Tensor::Zeros(w.gru.update_kernel.shape());
  const Tensor h = RandomTensor(rng, {1, c.hidden_channels, 4, 4}, -0.9, 0.9);
  const Tensor x = RandomTensor(rng, {1, c.cond_channels, 4, 4});
  w.gru.update_context = Tensor::Filled({c.hidden_channels}, 20.0);
  const GruStepResult open = GruStep(h, x, w);
  w.gru.update_context = Tensor::Filled({c.hidden_channels}, -20.0);
  const GruStepResult closed = GruStep(h, x, w);
  const double open_gap = testing::MaxAbsDiff(open.hidden, open.candidate);
  const double closed_gap = testing::MaxAbsDiff(closed.hidden, h);
  return {calls == 1000 && inside && open_gap <= 1e-8 && closed_gap <= 1e-8,
          std::to_string(calls) + " calls " + (inside ? "in range" : "OUT OF RANGE") +
              ", c=+20 gap " + Num(open_gap) + ", c=-20 gap " + Num(closed_gap)};
}

Outcome MetricOracles() {
  int maa_mismatch = 0;
  Rng rng(7);
  for (int set = 0; set < 50; ++set) {
    PoseErrors e;
    const std::size_t n = 1 + rng.Index(20);
    for (std::size_t i = 0; i < n; ++i) {
      e.rotation_deg.push_back(rng.Uniform() < 0.3 ? std::floor(rng.Uniform(0, 35))
                                                   : rng.Uniform(0, 40));
      e.translation_deg.push_back(rng.Uniform(0, 40));
    }
    double direct = 0.0;
    for (int tau = 1; tau <= 30; ++tau) {
      int hits = 0;
      for (std::size_t i = 0; i < n; ++i)
        hits += e.rotation_deg[i] < tau && e.translation_deg[i] < tau;
      direct += static_cast<double>(hits) / n;
    }
    if (Maa30(e) != direct / 30.0) ++maa_mismatch;
  }
  int cloud_mismatch = 0;
  for (int seed = 0; seed < 50; ++seed) {
    Rng r(300 + seed);
    const PointList pred = RandomPoints(r, 200), gt = RandomPoints(r, 200);
    const auto brute = [](const PointList& from, const PointList& to) {
      std::vector<double> d;
      for (const Vec3& q : from) {
        double best = std::numeric_limits<double>::infinity();
        for (const Vec3& p : to) best = std::min(best, (p - q).norm());
        d.push_back(best);
      }
      return d;
    };
    const std::vector<double> acc = brute(pred, gt), comp = brute(gt, pred);
    double acc_mean = 0.0, comp_mean = 0.0;
    for (double d : acc) acc_mean += d;
    for (double d : comp) comp_mean += d;
    acc_mean /= acc.size();
    comp_mean /= comp.size();
    const CloudStats s = CloudAccuracyCompleteness(pred, gt, false);
    if (NearestDistances(pred, gt) != acc || NearestDistances(gt, pred) != comp ||
        s.acc_mean != acc_mean || s.comp_mean != comp_mean ||
        s.acc_median != Median(acc) || s.comp_median != Median(comp)) {
      ++cloud_mismatch;
    }
  }
  return {maa_mismatch == 0 && cloud_mismatch == 0,
          "mAA mismatches " + std::to_string(maa_mismatch) +
              "/50, acc/comp mismatches " + std::to_string(cloud_mismatch) + "/50"};
}

double ParseAfter(const std::string& text, const std::string& key) {
  const auto at = text.find(key);
  if (at == std::string::npos) throw std::runtime_error("missing '" + key + "'");
  return std::stod(text.substr(at + key.size()));
}

Outcome ToyRefinement() {
  const std::filesystem::path dir =
      std::filesystem::temp_directory_path() / "monoref_acceptance_train";
  std::ostringstream out, err;
  const int code = RunCommand({"train-toy", "--seed", "1", "--scenes", "64",
                               "--test-scenes", "16", "--size", "32x32", "--out",
                               dir.string()},
                              out, err);
  if (code != 0) return {false, "train-toy exited " + std::to_string(code) + ": " + err.str()};
  const std::string text = out.str();
  const auto line_after = [&](const std::string& label) {
    return text.substr(text.find(label));
  };
  const std::string error_line = line_after("held-out mean error");
  const std::string maa_line = line_after("held-out mAA30");
  const double e0 = ParseAfter(error_line, "P0 ");
  const double en = ParseAfter(error_line, "PN ");
  const double m0 = ParseAfter(maa_line, "P0 ");
  const double mn = ParseAfter(maa_line, "PN ");
  const double reduction = 1.0 - en / e0;
  return {reduction >= 0.30 && mn >= m0,
          "error " + Num(e0) + " -> " + Num(en) + " (" + Num(100 * reduction) +
              "% lower, need >= 30%), mAA30 " + Num(m0) + " -> " + Num(mn)};
}

Outcome IterationAblation() {
  const NoiseSpec noise;
  const auto train = MakeCorpus(MixSeed(1, 100), 64, 32, 32, noise);
  const auto test = MakeCorpus(MixSeed(1, 200), 16, 32, 32, noise);
  double mean[2] = {0.0, 0.0};
  std::ostringstream per_seed;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    for (int a = 0; a < 2; ++a) {
      TrainConfig cfg;
      cfg.refine.iterations = a == 0 ? 1 : 4;
      cfg.epochs = 20;
      cfg.seed = seed;
      const EvaluationSummary ev = Evaluate(test, TrainRefinement(train, cfg).weights);
      mean[a] += ev.mean_refined_error / 5.0;
      per_seed << (a == 0 ? " [" : "/") << Num(ev.mean_refined_error)
               << (a == 1 ? "]" : "");
    }
  }
  return {mean[1] <= mean[0], "mean held-out error N=1 " + Num(mean[0]) +
                                  ", N=4 " + Num(mean[1]) + "; per seed N1/N4" +
                                  per_seed.str()};
}

Outcome ContainerRoundTrip() {
  Rng rng(9);
  int mismatches = 0;
  for (int set = 0; set < 100; ++set) {
    const std::vector<Record> records = RandomRecords(rng);
    const std::vector<std::uint8_t> bytes = EncodeContainer(records);
    if (DecodeContainer(bytes) != records ||
        EncodeContainer(DecodeContainer(bytes)) != bytes) {
      ++mismatches;
    }
  }
  const auto code_of = [](const std::vector<std::uint8_t>& bytes) {
    try {
      DecodeContainer(bytes);
    } catch (const Error& e) {
      return std::string(ErrorCodeName(e.code()));
    }
    return std::string("none");
  };
  const std::vector<double> v{1, 2};
  const std::vector<Record> pair{Record::F64("a", {2}, v), Record::F64("b", {2}, v)};
  const std::vector<std::uint8_t> good = EncodeContainer(pair);
  std::vector<std::uint8_t> magic = good, cut = good, dtype = good, dup = good,
                            tail = good;
  std::memcpy(magic.data(), "XXXX", 4);
  cut.pop_back();
  dtype[4 + 4 + 4 + 1] = 9;
  dup[8 + 22 + 4] = 'a';  // name byte of table entry 1
  tail.push_back(0);
  const std::vector<std::pair<std::string, std::string>> faults{
      {code_of(magic), ErrorCodeName(ErrorCode::kMagicMismatch)},
      {code_of(cut), ErrorCodeName(ErrorCode::kTruncated)},
      {code_of(dtype), ErrorCodeName(ErrorCode::kUnknownDtype)},
      {code_of(dup), ErrorCodeName(ErrorCode::kDuplicateRecord)},
      {code_of(tail), ErrorCodeName(ErrorCode::kMalformed)}};
  int fault_ok = 0;
  std::string got;
  for (const auto& [actual, expected] : faults) {
    fault_ok += actual == expected;
    got += (got.empty() ? "" : ", ") + actual;
  }
  return {mismatches == 0 && fault_ok == static_cast<int>(faults.size()),
          "100 sets, " + std::to_string(mismatches) + " mismatches; faults -> " + got};
}

}  // namespace
}  // namespace monoref

int main(int argc, char** argv) {
  using namespace monoref;
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--only") == 0 && i + 1 < argc) {
      only.insert(std::stoi(argv[++i]));
    } else {
      std::cerr << "usage: acceptance [--only N]...\n";
      return 2;
    }
  }
  const std::vector<std::pair<int, std::function<Outcome()>>> criteria{
      {1, Umeyama100},      {2, GradChecks},    {3, AlignRoundTrip},
      {4, LossAlgebra},     {5, GruInvariants}, {6, MetricOracles},
      {7, ToyRefinement},   {8, IterationAblation}, {9, ContainerRoundTrip}};
  const std::map<int, double> time_limit{{1, 5.0}, {2, 60.0}, {7, 15 * 60.0}};
  int unexpected = 0;
  for (const auto& [id, run] : criteria) {
    if (!only.empty() && !only.count(id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (time_limit.count(id) && seconds >= time_limit.at(id)) {
      o.pass = false;
      o.detail += "; over the " + std::to_string(static_cast<int>(time_limit.at(id))) +
                  " s limit";
    }
    const bool known = kKnownFailures.count(id) > 0;
    std::cout << "criterion " << id << ": " << (o.pass ? "PASS" : "FAIL") << "  "
              << o.detail << "  [" << std::fixed << std::setprecision(1) << seconds
              << " s]" << (!o.pass && known ? "  (known failure)" : "") << "\n"
              << std::defaultfloat << std::flush;
    if (!o.pass && !known) ++unexpected;
  }
  return unexpected == 0 ? 0 : 1;
}
