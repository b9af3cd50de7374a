#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"

#include "atom/bench.hpp"
#include "atom/config.hpp"
#include "atom/model_io.hpp"
#include "testutil.hpp"

using namespace atom;
namespace fs = std::filesystem;

TEST_CASE("synthetic sequences: determinism and drift by construction") {
  SynthSpec spec;
  spec.n_frames = 5;
  spec.speed = 2.0;
  Sequence a = synth_sequence(spec, 42);
  Sequence b = synth_sequence(spec, 42);
  REQUIRE(a.size() == 5);
  for (int f = 0; f < a.size(); ++f) {
    for (int64_t i = 0; i < a.frames[f].size(); ++i) {
      CHECK(a.frames[f][i] == b.frames[f][i]);  // pixel-identical
    }
  }

  SynthSpec stat;
  stat.n_frames = 6;
  stat.speed = 0;
  Sequence s = synth_sequence(stat, 7);
  for (int f = 1; f < s.size(); ++f) {
    CHECK(s.ground_truth[f].cx == doctest::Approx(s.ground_truth[0].cx));
    CHECK(s.ground_truth[f].w == doctest::Approx(s.ground_truth[0].w));
  }

  SynthSpec asp;
  asp.n_frames = 10;
  asp.aspect_factor = 2.0;
  asp.speed = 0.5;
  Sequence sa = synth_sequence(asp, 9);
  const double r0 = sa.ground_truth.front().w / sa.ground_truth.front().h;
  const double r1 = sa.ground_truth.back().w / sa.ground_truth.back().h;
  CHECK(r1 / r0 == doctest::Approx(2.0).epsilon(1e-6));

  SynthSpec bad;
  bad.target_w = 400;
  CHECK_THROWS_AS(synth_sequence(bad, 1), Error);
}

TEST_CASE("sequence save/load round trip and errors") {
  const fs::path dir = fs::temp_directory_path() / "atom_seq_test";
  fs::remove_all(dir);

  SynthSpec spec;
  spec.n_frames = 3;
  spec.width = 96;
  spec.height = 64;
  spec.target_w = 20;
  spec.target_h = 16;
  Sequence seq = synth_sequence(spec, 3);
  save_sequence(dir.string(), seq);

  Sequence loaded = load_sequence(dir.string());
  REQUIRE(loaded.size() == 3);
  CHECK(loaded.frames[0].shape() == std::vector<int>{64, 96, 3});
  for (int f = 0; f < 3; ++f) {
    CHECK(loaded.ground_truth[f].cx ==
          doctest::Approx(seq.ground_truth[f].cx).epsilon(1e-3));
  }
  // Pixels survive 8-bit quantization.
  double max_err = 0;
  for (int64_t i = 0; i < seq.frames[0].size(); ++i) {
    max_err = std::max(
        max_err,
        std::abs(static_cast<double>(seq.frames[0][i] - loaded.frames[0][i])));
  }
  CHECK(max_err <= 0.5 / 255.0 + 1e-9);

  // Ground-truth parsing: corner+size 10,20,30,40 -> center (25, 40).
  {
    std::ofstream gt(dir / "groundtruth.txt");
    gt << "10,20,30,40\n10,20,30,40\n10,20,30,40\n";
  }
  Sequence conv = load_sequence(dir.string());
  CHECK(conv.ground_truth[0].cx == doctest::Approx(25.0));
  CHECK(conv.ground_truth[0].cy == doctest::Approx(40.0));

  // Malformed line reported with its number.
  {
    std::ofstream gt(dir / "groundtruth.txt");
    gt << "10,20,30,40\nbroken\n10,20,30,40\n";
  }
  try {
    load_sequence(dir.string());
    FAIL("expected malformed-line error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }

  // Frame/ground-truth count mismatch.
  {
    std::ofstream gt(dir / "groundtruth.txt");
    gt << "10,20,30,40\n";
  }
  CHECK_THROWS_AS(load_sequence(dir.string()), Error);

  // Missing ground-truth file names the path.
  fs::remove(dir / "groundtruth.txt");
  try {
    load_sequence(dir.string());
    FAIL("expected missing-file error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("groundtruth.txt") != std::string::npos);
  }
  fs::remove_all(dir);
}

TEST_CASE("overlap precision curve and AUC") {
  std::vector<double> ones(10, 1.0);
  OpCurve c = op_curve(ones);
  for (int t = 0; t < 100; ++t) CHECK(c.op[t] == doctest::Approx(100.0));
  CHECK(auc(c) == doctest::Approx(100.0).epsilon(0.01));

  std::vector<double> halves(10, 0.5);
  CHECK(auc(op_curve(halves)) == doctest::Approx(50.0).epsilon(0.02));

  std::vector<double> mixed = {0.25, 0.75};
  OpCurve m = op_curve(mixed);
  CHECK(m.op[50] == doctest::Approx(50.0));

  CHECK_THROWS_AS(op_curve({}), Error);
  CHECK_THROWS_AS(op_curve({1.5}), Error);

  // Monotonically non-increasing in the threshold.
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> ious;
  for (int i = 0; i < 200; ++i) ious.push_back(u(rng));
  OpCurve r = op_curve(ious);
  for (size_t t = 1; t < r.op.size(); ++t) CHECK(r.op[t] <= r.op[t - 1]);

  // Trapezoidal AUC tracks the mean IoU within half a point.
  double mean = 0;
  for (double v : ious) mean += v;
  mean = 100.0 * mean / ious.size();
  CHECK(std::abs(auc(r) - mean) < 0.5);
}

TEST_CASE("precision at a center-error threshold") {
  CHECK(precision_at({0.0, 0.0, 0.0}) == doctest::Approx(100.0));
  CHECK(precision_at({10.0, 30.0}, 20.0) == doctest::Approx(50.0));
  CHECK(precision_at({0.0, 5.0}, 0.0) == doctest::Approx(50.0));
  CHECK_THROWS_AS(precision_at({}), Error);
  CHECK_THROWS_AS(precision_at({-1.0}), Error);
}

TEST_CASE("trajectory CSV output is byte-stable") {
  Trajectory tr;
  tr.boxes = {BoundingBox(10, 10, 5, 5), BoundingBox(11.25, 10.5, 5, 5)};
  tr.confidences = {1.0, 0.875};
  tr.lost_flags = {0, 0};
  const fs::path p1 = fs::temp_directory_path() / "traj1.csv";
  const fs::path p2 = fs::temp_directory_path() / "traj2.csv";
  write_trajectory_csv(p1.string(), tr);
  write_trajectory_csv(p2.string(), tr);
  std::ifstream f1(p1), f2(p2);
  std::string s1((std::istreambuf_iterator<char>(f1)),
                 std::istreambuf_iterator<char>());
  std::string s2((std::istreambuf_iterator<char>(f2)),
                 std::istreambuf_iterator<char>());
  CHECK(s1 == s2);
  CHECK(s1.find("frame_index,x,y,w,h,confidence,lost_flag") == 0);
  fs::remove(p1);
  fs::remove(p2);
}

TEST_CASE("model container round trip") {
  const fs::path path = fs::temp_directory_path() / "model_test.atm";
  std::vector<ModelTensor> ts;
  std::mt19937_64 rng(5);
  TensorF a = testutil::random_tensor(rng, {2, 3}).cast<float>();
  TensorD b = testutil::random_tensor(rng, {4});
  ts.push_back(make_model_tensor("a", a));
  ts.push_back(make_model_tensor("b", b));
  save_model(path.string(), ts);

  auto loaded = load_model(path.string());
  REQUIRE(loaded.size() == 2);
  CHECK(loaded[0].dtype == 0);
  CHECK(loaded[1].dtype == 1);
  TensorF a2 = loaded[0].to_tensor<float>();
  for (int64_t i = 0; i < a.size(); ++i) CHECK(a2[i] == a[i]);
  TensorD b2 = loaded[1].to_tensor<double>();
  for (int64_t i = 0; i < b.size(); ++i) CHECK(b2[i] == b[i]);
  CHECK(find_tensor(loaded, "a") != nullptr);
  CHECK(find_tensor(loaded, "missing") == nullptr);

  // Corrupt the magic.
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(0);
    f.write("XX", 2);
  }
  CHECK_THROWS_AS(load_model(path.string()), Error);
  CHECK_THROWS_AS(load_model("/nonexistent/model.atm"), Error);
  fs::remove(path);
}

TEST_CASE("config parsing") {
  Config c = Config::parse_string(
      "# comment\n"
      "epochs = 12\n"
      "lr=1e-3  # trailing comment\n"
      "name = tiny run\n"
      "flag = true\n");
  CHECK(c.get_int("epochs", 0) == 12);
  CHECK(c.get_double("lr", 0) == doctest::Approx(1e-3));
  CHECK(c.get_string("name") == "tiny run");
  CHECK(c.get_bool("flag", false));
  CHECK(c.get_int("missing", 7) == 7);
  CHECK_THROWS_AS(Config::parse_string("noequals\n"), Error);
  CHECK_THROWS_AS(c.get_double("name", 0), Error);

  // Round trip through text.
  Config d = Config::parse_string(c.to_string());
  CHECK(d.get_int("epochs", 0) == 12);
}

TEST_CASE("evaluate_trajectory wires IoU and center error together") {
  std::vector<BoundingBox> gt = {BoundingBox(10, 10, 10, 10),
                                 BoundingBox(20, 20, 10, 10)};
  std::vector<BoundingBox> pred = {BoundingBox(10, 10, 10, 10),
                                   BoundingBox(26, 20, 10, 10)};
  EvalReport r = evaluate_trajectory(gt, pred);
  CHECK(r.ious[0] == doctest::Approx(1.0));
  CHECK(r.ious[1] == doctest::Approx(4.0 / 16.0).epsilon(1e-6));
  CHECK(r.center_errors[1] == doctest::Approx(6.0));
  CHECK(r.mean_iou == doctest::Approx(0.625).epsilon(1e-6));
  CHECK_THROWS_AS(evaluate_trajectory(gt, {pred[0]}), Error);
}

TEST_CASE("standard suite covers the ablation categories") {
  auto suite = standard_suite(2, 10);
  std::map<std::string, int> counts;
  for (const auto& e : suite) counts[e.category]++;
  for (const char* cat : {"static", "translation", "scale", "aspect",
                          "rotation", "distractor"}) {
    CHECK(counts[cat] == 2);
  }
  // Distractor specs actually carry distractors; aspect specs drift.
  for (const auto& e : suite) {
    if (e.category == "distractor") CHECK(e.spec.distractors > 0);
    if (e.category == "aspect") CHECK(e.spec.aspect_factor != 1.0);
  }
}

TEST_CASE("first-frame problems are deterministic under their seed") {
  TinyBackbone<float> bb(1);
  auto p1 = make_first_frame_problem<float>(bb, 5);
  auto p2 = make_first_frame_problem<float>(bb, 5);
  CHECK(p1.memory.size() == 30);
  REQUIRE(p1.init.w1.size() == p2.init.w1.size());
  for (int64_t i = 0; i < p1.init.w1.size(); ++i) {
    CHECK(p1.init.w1.value()[i] == p2.init.w1.value()[i]);
  }
}
