#include "monoref/cli.h"

#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <memory>
#include <numbers>
#include <sstream>

#include "CLI11.hpp"
#include "monoref/container.h"
#include "monoref/error.h"
#include "monoref/geometry.h"
#include "monoref/losses.h"
#include "monoref/metrics.h"
#include "monoref/random.h"
#include "monoref/synth.h"
#include "monoref/training.h"

namespace monoref {
namespace {

namespace fs = std::filesystem;

struct GridSize {
  std::size_t height = 32, width = 32;
};

GridSize ParseSize(const std::string& text) {
  const auto x = text.find('x');
  GridSize size;
  try {
    if (x == std::string::npos) throw std::invalid_argument(text);
    std::size_t used = 0;
    size.height = std::stoul(text.substr(0, x), &used);
    if (used != x) throw std::invalid_argument(text);
    const std::string rest = text.substr(x + 1);
    size.width = std::stoul(rest, &used);
    if (used != rest.size()) throw std::invalid_argument(text);
  } catch (const std::logic_error&) {
    throw Error(ErrorCode::kInvalidArgument,
                "--size expects <H>x<W>, got '" + text + "'");
  }
  return size;
}

NoiseSpec ParseNoise(const std::string& name) {
  if (name == "default") return NoiseSpec{};
  if (name == "zero") return NoiseSpec::Zero();
  if (name == "sim3") return NoiseSpec::Sim3Only();
  throw Error(ErrorCode::kInvalidArgument,
              "--noise must be default, zero or sim3, got '" + name + "'");
}

std::string SceneKey(std::size_t s) { return "scene" + std::to_string(s) + "/"; }

std::string ViewKey(std::size_t s, int v) {
  return SceneKey(s) + "view" + std::to_string(v) + "/";
}

std::shared_ptr<spdlog::logger> MakeLogger(std::ostream& err) {
  auto sink = std::make_shared<spdlog::sinks::ostream_sink_mt>(err);
  auto logger = std::make_shared<spdlog::logger>("monoref", sink);
  logger->set_pattern("[%l] %v");
  spdlog::level::level_enum level = spdlog::level::warn;
  if (const char* env = std::getenv("MONOREF_LOG")) {
    level = spdlog::level::from_str(env);
  }
  logger->set_level(level);
  return logger;
}

void EnsureDir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) {
    throw Error(ErrorCode::kIo,
                "cannot create directory '" + dir.string() + "': " + ec.message());
  }
}

void WriteText(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot open '" + path.string() + "'");
  out << text;
  if (!out) throw Error(ErrorCode::kIo, "write failed: '" + path.string() + "'");
}

// Scene indices present in a container, found via `scene<i>/view0/<key>`.
std::vector<std::size_t> ScenesWith(const std::vector<Record>& records,
                                    const std::string& key) {
  std::vector<std::size_t> out;
  for (std::size_t s = 0;; ++s) {
    const std::string base = ViewKey(s, 0) + key;
    if (!HasRecord(records, base) && !HasRecord(records, base + ".points")) {
      break;
    }
    out.push_back(s);
  }
  if (out.empty()) {
    throw Error(ErrorCode::kMissingRecord,
                "no scene0/view0/" + key + " record in container");
  }
  return out;
}

std::vector<SceneFixture> LoadOrMakeFixtures(const std::string& fixture_path,
                                             std::uint64_t seed,
                                             std::size_t scenes, GridSize size,
                                             const NoiseSpec& noise,
                                             int threads) {
  std::vector<SceneFixture> out;
  if (!fixture_path.empty()) {
    const std::vector<Record> records = LoadContainer(fixture_path);
    for (std::size_t s : ScenesWith(records, "pose")) {
      out.push_back(ReadFixture(records, SceneKey(s)));
    }
    return out;
  }
  out.resize(scenes);
  ParallelFor(scenes, threads, [&](std::size_t i) {
    out[i] = MakeScene(MixSeed(seed, i), size.height, size.width, noise);
  });
  return out;
}

std::string Fixed(double v, int digits = 6) {
  std::ostringstream os;
  os << std::setprecision(digits) << std::scientific << v;
  return os.str();
}

std::string Percent(double from, double to) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(1) << 100.0 * (1.0 - to / from) << "%";
  return os.str();
}

void EmitReport(const MetricReport& report, const std::string& out_dir,
                const std::string& stem, bool json, std::ostream& out) {
  out << report.ToTable();
  if (json) out << report.ToJson() << "\n";
  if (!out_dir.empty()) {
    EnsureDir(out_dir);
    WriteText(fs::path(out_dir) / (stem + ".json"), report.ToJson() + "\n");
    WriteText(fs::path(out_dir) / (stem + ".txt"), report.ToTable());
  }
}

// ---------------------------------------------------------------------------
// selftest: compact versions of the oracle suites.

struct SelfTest {
  std::ostream& out;
  int failures = 0;

  void Check(const std::string& name, const std::function<bool()>& body) {
    bool ok = false;
    std::string why;
    try {
      ok = body();
    } catch (const std::exception& e) {
      why = std::string(" (") + e.what() + ")";
    }
    out << (ok ? "PASS " : "FAIL ") << name << why << "\n";
    if (!ok) ++failures;
  }
};

Mat3 RandomRotation(Rng& rng) {
  Vec3 axis(rng.Normal(), rng.Normal(), rng.Normal());
  return AxisAngleRotation(axis.normalized(), rng.Uniform(-3.0, 3.0));
}

int RunSelfTest(std::uint64_t seed, std::ostream& out) {
  SelfTest t{out};
  t.Check("umeyama similarity round trip", [&] {
    Rng rng(MixSeed(seed, 1));
    for (int trial = 0; trial < 20; ++trial) {
      const Sim3 truth{std::exp(rng.Uniform(-1.0, 1.0)), RandomRotation(rng),
                       Vec3(rng.Normal(), rng.Normal(), rng.Normal())};
      PointList src(30);
      for (Vec3& p : src) p = Vec3(rng.Normal(), rng.Normal(), rng.Normal());
      const PointList dst = ApplySim3(truth, src);
      const std::vector<double> w(src.size(), 1.0);
      const Sim3 fit = Umeyama(src, dst, w, UmeyamaMode::kSimilarity);
      if (UmeyamaObjective(fit, src, dst, w) > 1e-9) return false;
    }
    return true;
  });
  t.Check("conv2d gradient check", [&] {
    Rng rng(MixSeed(seed, 2));
    std::vector<double> k(2 * 3 * 3 * 3);
    for (double& v : k) v = rng.Normal();
    std::vector<double> x(3 * 5 * 5);
    for (double& v : x) v = rng.Normal();
    const Tensor kernel({2, 3, 3, 3}, k);
    const ScalarFn f = [&](Graph& g, NodeId in) {
      const NodeId y = g.Conv2d(in, g.Constant(kernel),
                                g.Constant(Tensor::Zeros({2})), 1, 1);
      return g.Sum(g.Tanh(y));
    };
    return GradCheck(f, Tensor({1, 3, 5, 5}, x)) <= 1e-4;
  });
  t.Check("mAA30 matches enumeration", [&] {
    Rng rng(MixSeed(seed, 3));
    PoseErrors e;
    for (int i = 0; i < 40; ++i) {
      e.rotation_deg.push_back(rng.Uniform(0.0, 40.0));
      e.translation_deg.push_back(rng.Uniform(0.0, 40.0));
    }
    double direct = 0.0;
    for (int tau = 1; tau <= 30; ++tau) {
      int hits = 0;
      for (int i = 0; i < 40; ++i) {
        hits += (e.rotation_deg[i] < tau && e.translation_deg[i] < tau) ? 1 : 0;
      }
      direct += hits / 40.0;
    }
    return Maa30(e) == direct / 30.0;
  });
  t.Check("kd-tree equals brute force", [&] {
    Rng rng(MixSeed(seed, 4));
    PointList ref(200), query(200);
    for (Vec3& p : ref) p = Vec3(rng.Normal(), rng.Normal(), rng.Normal());
    for (Vec3& p : query) p = Vec3(rng.Normal(), rng.Normal(), rng.Normal());
    const std::vector<double> fast = NearestDistances(query, ref);
    for (std::size_t i = 0; i < query.size(); ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (const Vec3& p : ref) best = std::min(best, (query[i] - p).norm());
      if (fast[i] != best) return false;
    }
    return true;
  });
  t.Check("container round trip", [&] {
    Rng rng(MixSeed(seed, 5));
    std::vector<double> v(24);
    for (double& x : v) x = rng.Normal();
    std::vector<Record> records{Record::F64("a", {2, 3, 4}, v),
                                Record::U8("b", {3}, {1, 2, 3})};
    return DecodeContainer(EncodeContainer(records)) == records;
  });
  t.Check("iteration weights", [&] {
    const std::vector<double> w = IterationWeights(2, 0.9);
    return w.size() == 2 && w[0] == 0.9 && w[1] == 1.0;
  });
  t.Check("mono alignment round trip", [&] {
    const SceneFixture f = MakeScene(MixSeed(seed, 6), 16, 16,
                                     NoiseSpec::Sim3Only());
    for (const ViewData& v : f.views) {
      const AlignedMono a = AlignMonoToPair(v.mono, v.pair, v.confidence);
      if (PointmapRms(a.aligned, v.gt_world) > 1e-9) return false;
    }
    return true;
  });
  out << (t.failures == 0 ? "selftest: all checks passed\n"
                          : "selftest: " + std::to_string(t.failures) +
                                " check(s) failed\n");
  return t.failures == 0 ? 0 : 1;
}

}  // namespace

int RunCommand(const std::vector<std::string>& args, std::ostream& out,
               std::ostream& err) {
  auto log = MakeLogger(err);
  CLI::App app{"Monocular-guided two-view pointmap refinement toolkit",
               "monoref"};
  app.require_subcommand(1);

  std::uint64_t seed = 0;
  std::size_t scenes = 1;
  std::size_t test_scenes = 16;
  std::string size_text = "32x32";
  int iters = 2;
  double gamma = 0.9;
  double alpha = 0.2;
  std::string out_dir;
  std::string weights_path;
  int threads = 1;
  std::string noise_name = "default";
  std::string fixture_path;
  std::string pred_path, gt_path;
  std::string pose_pred_key = "pose", pose_gt_key = "pose";
  std::string pcd_pred_key = "pointmap", pcd_gt_key = "gt_world";
  std::size_t train_scenes = 64;
  bool json = false;
  bool prealign = false;
  TrainConfig train;
  std::string optimizer_name = "adam";

  const auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--seed", seed, "Base random seed");
    cmd->add_option("--threads", threads, "Worker threads")
        ->check(CLI::PositiveNumber);
  };
  const auto add_scene_flags = [&](CLI::App* cmd) {
    cmd->add_option("--scenes", scenes, "Number of scenes");
    cmd->add_option("--size", size_text, "Grid size <H>x<W>");
    cmd->add_option("--noise", noise_name, "Noise profile: default|zero|sim3");
  };

  auto* synth = app.add_subcommand("synth", "Generate synthetic fixtures");
  add_common(synth);
  add_scene_flags(synth);
  synth->add_option("--out", out_dir, "Output directory")->required();

  auto* align = app.add_subcommand(
      "align", "Globally align monocular maps to the pairwise maps");
  add_common(align);
  align->add_option("--size", size_text, "Grid size <H>x<W>");
  align->add_option("--noise", noise_name, "Noise profile: default|zero|sim3");
  align->add_option("--fixture", fixture_path, "Fixture container");

  auto* refine = app.add_subcommand("refine", "Run the refinement module");
  add_common(refine);
  refine->add_option("--scenes", scenes, "Number of generated scenes");
  refine->add_option("--size", size_text, "Grid size <H>x<W>");
  refine->add_option("--noise", noise_name, "Noise profile: default|zero|sim3");
  refine->add_option("--fixture", fixture_path, "Fixture container");
  refine->add_option("--weights", weights_path, "Weight checkpoint")->required();
  auto* refine_iters =
      refine->add_option("--iters", iters, "Refinement iterations N");
  refine->add_option("--out", out_dir, "Output directory")->required();

  auto* train_toy =
      app.add_subcommand("train-toy", "Train the refiner on synthetic scenes");
  add_common(train_toy);
  train_toy->add_option("--scenes", train_scenes, "Training scenes");
  train_toy->add_option("--test-scenes", test_scenes, "Held-out scenes");
  train_toy->add_option("--size", size_text, "Grid size <H>x<W>");
  train_toy->add_option("--noise", noise_name, "Noise profile");
  train_toy->add_option("--iters", iters, "Refinement iterations N");
  train_toy->add_option("--gamma", gamma, "Iteration weight decay");
  train_toy->add_option("--alpha", alpha, "Confidence regulariser weight");
  train_toy->add_option("--epochs", train.epochs, "Training epochs");
  train_toy->add_option("--lr", train.learning_rate, "Step size");
  train_toy->add_option("--batch", train.batch_size, "Scenes per step");
  train_toy->add_option("--optimizer", optimizer_name, "gd|adam");
  train_toy->add_option("--out", out_dir, "Output directory")->required();

  auto* eval_pose =
      app.add_subcommand("eval-pose", "Relative pose accuracy report");
  add_common(eval_pose);
  eval_pose->add_option("--pred", pred_path, "Predicted poses")->required();
  eval_pose->add_option("--gt", gt_path, "Ground-truth poses")->required();
  eval_pose->add_option("--pred-key", pose_pred_key, "Pose record key");
  eval_pose->add_option("--gt-key", pose_gt_key, "Pose record key");
  eval_pose->add_flag("--json", json, "Also print the JSON report");
  eval_pose->add_option("--out", out_dir, "Report directory");

  auto* eval_pcd =
      app.add_subcommand("eval-pcd", "Point-cloud accuracy and completeness");
  add_common(eval_pcd);
  eval_pcd->add_option("--pred", pred_path, "Predicted pointmaps")->required();
  eval_pcd->add_option("--gt", gt_path, "Ground-truth pointmaps")->required();
  eval_pcd->add_option("--pred-key", pcd_pred_key, "Pointmap record key");
  eval_pcd->add_option("--gt-key", pcd_gt_key, "Pointmap record key");
  eval_pcd->add_flag("--prealign", prealign,
                     "Similarity pre-alignment on pixel correspondences");
  eval_pcd->add_flag("--json", json, "Also print the JSON report");
  eval_pcd->add_option("--out", out_dir, "Report directory");

  auto* selftest = app.add_subcommand("selftest", "Run built-in oracle checks");
  add_common(selftest);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    const GridSize size = ParseSize(size_text);
    const NoiseSpec noise = ParseNoise(noise_name);

    if (*synth) {
      std::vector<Record> records;
      EnsureDir(out_dir);
      const auto fixtures =
          LoadOrMakeFixtures("", seed, scenes, size, noise, threads);
      out << "scene  seed                  valid0  valid1  pair_rms0  pair_rms1\n";
      for (std::size_t s = 0; s < fixtures.size(); ++s) {
        const SceneFixture& f = fixtures[s];
        AppendFixture(records, f, SceneKey(s));
        for (int v = 0; v < 2; ++v) {
          ExportPly(f.views[v].gt_world, f.views[v].image,
                    fs::path(out_dir) / ("scene" + std::to_string(s) + "_view" +
                                         std::to_string(v) + "_gt.ply"));
        }
        out << std::left << std::setw(7) << s << std::setw(22) << f.seed
            << std::setw(8) << f.views[0].gt_world.ValidCount() << std::setw(8)
            << f.views[1].gt_world.ValidCount()
            << std::setw(11) << Fixed(PointmapRms(f.views[0].pair, f.views[0].gt_world), 3)
            << Fixed(PointmapRms(f.views[1].pair, f.views[1].gt_world), 3) << "\n";
      }
      SaveContainer(fs::path(out_dir) / "fixtures.pmz", records);
      log->info("wrote {} scene(s) to {}", fixtures.size(), out_dir);
      return 0;
    }

    if (*align) {
      const NoiseSpec spec =
          align->count("--noise") ? noise : NoiseSpec::Sim3Only();
      const auto fixtures =
          LoadOrMakeFixtures(fixture_path, seed, 1, size, spec, threads);
      const SceneFixture& f = fixtures.front();
      out << "view  pre_rms_vs_pair   post_rms_vs_pair  post_rms_vs_gt    scale\n";
      for (int v = 0; v < 2; ++v) {
        const ViewData& view = f.views[v];
        const AlignedMono a =
            AlignMonoToPair(view.mono, view.pair, view.confidence);
        out << std::left << std::setw(6) << v << std::setw(18)
            << Fixed(PointmapRms(view.mono, view.pair)) << std::setw(18)
            << Fixed(PointmapRms(a.aligned, view.pair)) << std::setw(18)
            << Fixed(PointmapRms(a.aligned, view.gt_world))
            << Fixed(a.transform.scale) << "\n";
      }
      return 0;
    }

    if (*refine) {
      RefineWeights weights = ReadWeights(LoadContainer(weights_path));
      if (refine_iters->count() > 0) weights.config.iterations = iters;
      weights.config.Validate();
      const auto fixtures =
          LoadOrMakeFixtures(fixture_path, seed, scenes, size, noise, threads);
      EnsureDir(out_dir);
      std::vector<PreparedScene> prepared(fixtures.size());
      std::vector<std::array<std::vector<Pointmap>, 2>> outputs(fixtures.size());
      ParallelFor(fixtures.size(), threads, [&](std::size_t s) {
        prepared[s] = PrepareScene(fixtures[s]);
        for (int v = 0; v < 2; ++v) {
          outputs[s][v] = Refine(prepared[s].inputs[v], weights);
        }
      });
      std::vector<Record> records;
      out << "scene  view  error_P0      error_PN      reduction\n";
      for (std::size_t s = 0; s < fixtures.size(); ++s) {
        for (int v = 0; v < 2; ++v) {
          const std::string key = ViewKey(s, v);
          const Pointmap& initial = prepared[s].inputs[v].pair;
          const Pointmap& final_map = outputs[s][v].back();
          AppendPointmap(records, key + "initial", initial);
          for (std::size_t j = 0; j < outputs[s][v].size(); ++j) {
            AppendPointmap(records, key + "iter" + std::to_string(j + 1),
                           outputs[s][v][j]);
          }
          AppendPointmap(records, key + "pointmap", final_map);
          const RigidPose pose =
              v == 0 ? RigidPose::Identity()
                     : RecoverRelativePose(final_map, fixtures[s].views[1].gt_local,
                                           fixtures[s].views[1].confidence);
          AppendPose(records, key + "pose", pose);
          ExportPly(final_map, fixtures[s].views[v].image,
                    fs::path(out_dir) / ("scene" + std::to_string(s) + "_view" +
                                         std::to_string(v) + ".ply"));
          const double e0 =
              PointmapMeanError(initial, fixtures[s].views[v].gt_world);
          const double e1 =
              PointmapMeanError(final_map, fixtures[s].views[v].gt_world);
          out << std::left << std::setw(7) << s << std::setw(6) << v
              << std::setw(14) << Fixed(e0, 4) << std::setw(14) << Fixed(e1, 4)
              << Percent(e0, e1) << "\n";
        }
      }
      SaveContainer(fs::path(out_dir) / "refined.pmz", records);
      return 0;
    }

    if (*train_toy) {
      train.refine.iterations = iters;
      train.loss.gamma = gamma;
      train.loss.alpha = alpha;
      train.seed = seed;
      train.threads = threads;
      if (optimizer_name == "gd") {
        train.optimizer = OptimizerKind::kGradientDescent;
      } else if (optimizer_name == "adam") {
        train.optimizer = OptimizerKind::kAdam;
      } else {
        throw Error(ErrorCode::kInvalidArgument,
                    "--optimizer must be gd or adam, got '" + optimizer_name +
                        "'");
      }
      EnsureDir(out_dir);
      const auto start = std::chrono::steady_clock::now();
      const auto train_set = MakeCorpus(MixSeed(seed, 100), train_scenes, size.height,
                                        size.width, noise, threads);
      const auto test_set = MakeCorpus(MixSeed(seed, 200), test_scenes,
                                       size.height, size.width, noise, threads);
      std::ostringstream curve;
      curve << "epoch,refine_loss,total_loss\n" << std::setprecision(17);
      train.on_epoch = [&](const EpochLog& e) {
        curve << e.epoch << "," << e.refine_loss << "," << e.total_loss << "\n";
        log->info("epoch {} refine loss {:.6f}", e.epoch, e.refine_loss);
      };
      const TrainResult result = TrainRefinement(train_set, train);
      std::vector<Record> records;
      AppendWeights(records, result.weights);
      SaveContainer(fs::path(out_dir) / "weights.pmz", records);
      WriteText(fs::path(out_dir) / "loss_curve.csv", curve.str());

      const EvaluationSummary eval = Evaluate(test_set, result.weights, threads);
      const double seconds = std::chrono::duration<double>(
                                 std::chrono::steady_clock::now() - start)
                                 .count();
      const std::map<std::string, std::string> config{
          {"scenes", std::to_string(train_scenes)},
          {"test_scenes", std::to_string(test_scenes)},
          {"size", size_text},
          {"iters", std::to_string(iters)},
          {"gamma", Fixed(gamma)},
          {"alpha", Fixed(alpha)},
          {"epochs", std::to_string(train.epochs)},
          {"lr", Fixed(train.learning_rate)},
          {"batch", std::to_string(train.batch_size)},
          {"optimizer", optimizer_name},
          {"noise", noise_name}};
      for (const bool refined : {false, true}) {
        MetricReport report;
        report.command = refined ? "train-toy (refined P^N)" : "train-toy (P^0)";
        report.seed = seed;
        report.config = config;
        report.has_pose = report.has_cloud = true;
        for (const SceneEvaluation& s : eval.scenes) {
          SceneMetrics m = PoseMetrics(
              "s" + std::to_string(report.scenes.size()),
              refined ? s.refined_pose : s.initial_pose);
          const CloudStats& c = refined ? s.refined_cloud : s.initial_cloud;
          m.acc_mean = c.acc_mean;
          m.acc_median = c.acc_median;
          m.comp_mean = c.comp_mean;
          m.comp_median = c.comp_median;
          report.scenes.push_back(m);
        }
        report.Finalize();
        EnsureDir(out_dir);
        const std::string stem = refined ? "eval_refined" : "eval_initial";
        WriteText(fs::path(out_dir) / (stem + ".json"), report.ToJson() + "\n");
        WriteText(fs::path(out_dir) / (stem + ".txt"), report.ToTable());
      }
      out << "final refine loss      " << Fixed(result.curve.empty()
                                                    ? 0.0
                                                    : result.curve.back().refine_loss)
          << "\n"
          << "held-out mean error    P0 " << Fixed(eval.mean_initial_error, 4)
          << "  PN " << Fixed(eval.mean_refined_error, 4) << "  ("
          << Percent(eval.mean_initial_error, eval.mean_refined_error)
          << " lower)\n"
          << "held-out mAA30         P0 " << std::fixed << std::setprecision(4)
          << eval.maa_initial << "  PN " << eval.maa_refined << "\n"
          << "runtime                " << std::setprecision(1) << seconds
          << " s\n";
      return 0;
    }

    if (*eval_pose) {
      const std::vector<Record> pred = LoadContainer(pred_path);
      const std::vector<Record> gt = LoadContainer(gt_path);
      MetricReport report;
      report.command = "eval-pose";
      report.seed = seed;
      report.config = {{"pred", pred_path}, {"gt", gt_path}};
      report.has_pose = true;
      for (std::size_t s : ScenesWith(gt, pose_gt_key)) {
        std::vector<RigidPose> p, g;
        for (int v = 0; HasRecord(gt, ViewKey(s, v) + pose_gt_key); ++v) {
          g.push_back(ReadPose(gt, ViewKey(s, v) + pose_gt_key));
          p.push_back(ReadPose(pred, ViewKey(s, v) + pose_pred_key));
        }
        report.scenes.push_back(PoseMetrics("scene" + std::to_string(s),
                                            RelativePoseErrors(p, g)));
      }
      report.Finalize();
      EmitReport(report, out_dir, "pose_report", json, out);
      return 0;
    }

    if (*eval_pcd) {
      const std::vector<Record> pred = LoadContainer(pred_path);
      const std::vector<Record> gt = LoadContainer(gt_path);
      MetricReport report;
      report.command = "eval-pcd";
      report.seed = seed;
      report.config = {{"pred", pred_path},
                       {"gt", gt_path},
                       {"prealign", prealign ? "true" : "false"}};
      report.has_cloud = true;
      for (std::size_t s : ScenesWith(gt, pcd_gt_key)) {
        PointList p, g, src, dst;
        for (int v = 0; HasRecord(gt, ViewKey(s, v) + pcd_gt_key + ".points");
             ++v) {
          const Pointmap pm = ReadPointmap(pred, ViewKey(s, v) + pcd_pred_key);
          const Pointmap gm = ReadPointmap(gt, ViewKey(s, v) + pcd_gt_key);
          const PointList pv = pm.ValidPoints(), gv = gm.ValidPoints();
          p.insert(p.end(), pv.begin(), pv.end());
          g.insert(g.end(), gv.begin(), gv.end());
          if (pm.height() != gm.height() || pm.width() != gm.width()) continue;
          for (std::size_t k = 0; k < pm.pixels(); ++k) {
            if (pm.valid(k) && gm.valid(k)) {
              src.push_back(pm[k]);
              dst.push_back(gm[k]);
            }
          }
        }
        if (prealign) {
          const std::vector<double> uniform(src.size(), 1.0);
          p = ApplySim3(Umeyama(src, dst, uniform, UmeyamaMode::kSimilarity), p);
        }
        const CloudStats c = CloudAccuracyCompleteness(p, g, false);
        SceneMetrics m;
        m.label = "scene" + std::to_string(s);
        m.acc_mean = c.acc_mean;
        m.acc_median = c.acc_median;
        m.comp_mean = c.comp_mean;
        m.comp_median = c.comp_median;
        report.scenes.push_back(m);
      }
      report.Finalize();
      EmitReport(report, out_dir, "pcd_report", json, out);
      return 0;
    }

    if (*selftest) return RunSelfTest(seed, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace monoref
