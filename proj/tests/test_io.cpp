#include <doctest.h>

#include <filesystem>
#include <cstring>
#include <fstream>
#include <limits>

#include "test_util.hpp"
#include "trace/checkpoint.hpp"
#include "trace/dataset_io.hpp"
#include "trace/training.hpp"

using namespace trace;
using namespace trace::testing;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / "trace_unit_io";
  fs::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("dataset lines round trip") {
  RawTrajectory t;
  t.times = {1.7e9, 1.7e9 + 10.5};
  t.points = {{116.123456789012, 39.9}, {116.2, 39.987654321098}};
  t.agent_id = 3;
  t.weekday = 6;
  auto back = parse_dataset_line(dataset_line(t));
  CHECK(back.times == t.times);
  CHECK(back.points == t.points);
  CHECK(back.agent_id == 3);
  CHECK(back.weekday == 6);
  CHECK(back.observed.empty());

  t.observed = {1, 0};
  auto sparse = parse_dataset_line(dataset_line(t));
  CHECK(sparse.observed == t.observed);

  auto nulls = parse_dataset_line(R"({"times":[0,1],"lon":[1,null],"lat":[2,null],"observed":[1,0]})");
  CHECK(std::isnan(nulls.points[1].lon));
  CHECK(nulls.agent_id == -1);

  CHECK_THROWS_AS(parse_dataset_line("{not json"), Error);
  CHECK_THROWS_AS(parse_dataset_line(R"({"times":[0,1],"lon":[1],"lat":[2,3]})"), Error);
}

TEST_CASE("dataset file round trip") {
  Rng rng(1);
  auto data = generate(5, 32, TrajectoryStyle::kCourierJittery, rng);
  auto path = scratch("data.jsonl");
  write_dataset(path, data);
  auto back = read_dataset(path);
  REQUIRE(back.size() == data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    CHECK(back[i].times == data[i].times);
    CHECK(back[i].points == data[i].points);
  }
  CHECK_THROWS_AS(read_dataset(scratch("missing.jsonl")), Error);
}

TEST_CASE("coord stats sidecar and sparse tasks") {
  Rng rng(2);
  auto data = generate(4, 16, TrajectoryStyle::kTaxiSmooth, rng);
  auto stats = fit_coord_stats(data);
  auto path = scratch("stats.norm.json");
  write_coord_stats(path, stats);
  auto back = read_coord_stats(path);
  CHECK(back.mean_lon == stats.mean_lon);
  CHECK(back.std_lat == stats.std_lat);
  CHECK(norm_sidecar_path("a/b.jsonl") == fs::path("a/b.jsonl.norm.json"));

  std::vector<std::uint8_t> obs(16, 1);
  obs[3] = obs[7] = 0;
  auto task = to_task(data[0], stats, obs, true);
  CHECK(task.query_times.size() == 2);
  CHECK(task.truth->size() == 2);
  CHECK(task.contexts.size() == 2);
  auto dense = to_dense(data[0], stats);
  CHECK((*task.truth)[0] == dense.points[3]);
}

TEST_CASE("checkpoint round trip") {
  auto cfg = tiny_arch(16);
  cfg.contexts = {{ContextKind::kAgentId, 4, 16, 1}};
  Checkpoint c;
  c.arch = cfg;
  c.schedule = make_schedule(40, 1e-4, 0.05);
  c.params = random_params(cfg, 3);
  c.training_step = 123;
  c.adam = make_adam_state(c.params);
  c.adam->step = 123;
  c.adam->m[0].fill(0.5f);
  c.coords = CoordStats{116, 40, 0.02, 0.03};
  c.extra["note"] = "x";
  auto path = scratch("model.bin");
  save_checkpoint(path, c);
  auto back = load_checkpoint(path);
  CHECK(back.arch.blocks == cfg.blocks);
  CHECK(back.arch.contexts.size() == 1);
  CHECK(back.schedule.alpha_bar == c.schedule.alpha_bar);
  CHECK(back.training_step == 123);
  REQUIRE(back.params.count() == c.params.count());
  for (std::size_t i = 0; i < c.params.count(); ++i) CHECK(back.params.value(i) == c.params.value(i));
  REQUIRE(back.adam.has_value());
  CHECK(back.adam->step == 123);
  CHECK(back.adam->m[0] == c.adam->m[0]);
  CHECK(back.coords->std_lat == 0.03);
  CHECK(back.extra["note"] == "x");

  std::ifstream in(path, std::ios::binary);
  char magic[8];
  in.read(magic, 8);
  CHECK(std::string(magic, 8) == "TRACECKP");
}

TEST_CASE("corrupted checkpoints are rejected") {
  auto cfg = tiny_arch(16);
  Checkpoint c;
  c.arch = cfg;
  c.schedule = make_schedule(10);
  c.params = random_params(cfg, 4);
  auto path = scratch("bad.bin");
  save_checkpoint(path, c);
  std::string bytes;
  {
    std::ifstream in(path, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  auto expect_error = [&](const std::string& content, ErrorCategory want) {
    std::ofstream(path, std::ios::binary) << content;
    try {
      load_checkpoint(path);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.category() == want);
    }
  };
  auto magic = bytes;
  magic[0] = 'X';
  expect_error(magic, ErrorCategory::kFormat);
  expect_error(bytes.substr(0, bytes.size() - 5), ErrorCategory::kFormat);
  auto nan = bytes;
  const float q = std::numeric_limits<float>::quiet_NaN();
  std::memcpy(nan.data() + nan.size() - 4, &q, 4);
  expect_error(nan, ErrorCategory::kNumeric);
}
