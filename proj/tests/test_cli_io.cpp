#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <nlohmann/json.hpp>

#include "hessfit/io.hpp"

using namespace hessfit;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("hessfit_test_" + std::to_string(::getpid()) + "_" +
            std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

}  // namespace

TEST_CASE("float formatting round-trips exactly") {
  for (const double v : {1.0 / 3.0, M_PI, 1e-17, -2.5e300, 0.1, 123456789.123456}) {
    CHECK(parse_double(format_g17(v)) == v);
  }
}

TEST_CASE("parse_config: defaults, unknown keys, bad grids") {
  // minimal sphere sample config: defaults filled
  const RunConfig rc = parse_config(R"({"subcommand":"sample","sample":{"model":"sphere"}})");
  CHECK(rc.sub == Subcommand::Sample);
  CHECK(rc.sample.seed == 0);
  CHECK(rc.sample.density.kind() == DensityKind::Uniform);
  CHECK(rc.sample.n == 1000);

  // unknown key is rejected and named
  try {
    parse_config(R"({"subcommand":"converge","converge":{"epsilonn":[0.4,0.2]}})");
    CHECK(false);
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("epsilonn") != std::string::npos);
  }

  // ascending eps grid is rejected and named
  try {
    parse_config(R"({"subcommand":"converge","converge":{"eps_grid":[0.1,0.2]}})");
    CHECK(false);
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("eps_grid") != std::string::npos);
  }
}

TEST_CASE("converge config round-trips losslessly") {
  const std::string text = R"({
    "model": {"name": "hemisphere", "d": 2},
    "density": {"kind": "smooth_bump", "a": 0.5, "k": 1},
    "field": "ambient_axis",
    "eps_grid": [0.4, 0.3, 0.22, 0.16],
    "n_rule": {"c": 8, "A": 0.0, "n_at_eps_max": 20000},
    "query": {"type": "boundary_band", "count": 64},
    "repetitions": 3,
    "seed": 7
  })";
  const ConvergenceConfig c1 = parse_converge_config(Json::parse(text));
  const Json j1 = converge_config_to_json(c1);
  const ConvergenceConfig c2 = parse_converge_config(j1);
  CHECK(converge_config_to_json(c2) == j1);
  CHECK(c2.model.kind() == ModelKind::Hemisphere);
  CHECK(c2.query.type == QueryType::BoundaryBandPoints);
  CHECK(c2.seed == 7);
  CHECK(c2.eps_grid == std::vector<double>{0.4, 0.3, 0.22, 0.16});
}

TEST_CASE("cloud CSV round trip with sidecar metadata") {
  TempDir dir;
  const auto m = ManifoldModel::cylinder();
  const PointCloud cloud = sample(m, DensityModel::uniform(m), 500, 3);
  Json meta{{"model", model_to_json(m)},
            {"model_id", cloud.model_id},
            {"density_id", cloud.density_id},
            {"seed", cloud.seed}};
  const std::string path = dir.file("cyl.csv");
  write_cloud_csv(path, cloud, meta);
  const PointCloud back = read_cloud_csv(path);
  REQUIRE(back.n() == cloud.n());
  CHECK(back.points == cloud.points);  // 17-digit formatting is exact
  CHECK(back.model_id == cloud.model_id);
  CHECK(back.seed == cloud.seed);
}

TEST_CASE("run sample is idempotent and deterministic") {
  TempDir dir;
  RunConfig rc;
  rc.sub = Subcommand::Sample;
  rc.sample = parse_sample_config(Json::parse(
      R"({"model":"sphere","n":200,"seed":11,"field":"ambient_axis"})"));
  rc.sample_out = dir.file("cloud.csv");
  rc.sample_fvals_out = dir.file("fvals.csv");
  REQUIRE(run(rc) == 0);
  const std::string first = read_text(rc.sample_out);
  const std::string fvals1 = read_text(rc.sample_fvals_out);
  REQUIRE(run(rc) == 0);
  CHECK(read_text(rc.sample_out) == first);
  CHECK(read_text(rc.sample_fvals_out) == fvals1);
  CHECK(fs::exists(rc.sample_out + ".meta.json"));
}

TEST_CASE("run estimate end to end, plus the empty-cloud failure path") {
  TempDir dir;
  RunConfig rc;
  rc.sub = Subcommand::Sample;
  rc.sample = parse_sample_config(Json::parse(R"({"model":"sphere","n":4000,"seed":12})"));
  rc.sample_out = dir.file("cloud.csv");
  REQUIRE(run(rc) == 0);

  RunConfig est;
  est.sub = Subcommand::Estimate;
  est.estimate.cloud_path = dir.file("cloud.csv");
  est.estimate.fvals = "ambient_axis";  // resolved through the sidecar metadata
  est.estimate.z = "index:7";
  est.estimate.eps = 0.5;
  est.estimate.dim = 2;
  est.estimate.out_path = dir.file("est.json");
  REQUIRE(run(est) == 0);
  const Json out = Json::parse(read_text(est.estimate.out_path));
  CHECK(out.contains("f0"));
  CHECK(out.at("grad").size() == 2);
  CHECK(out.at("hess").size() == 2);
  CHECK(out.at("basis").size() == 3);
  CHECK(out.at("k_z").get<long>() > 6);
  CHECK(out.at("cond").get<double>() > 1.0);

  // estimate on an empty neighborhood: exit 3 with the error named
  RunConfig far = est;
  far.estimate.z = "9.0,9.0,9.0";
  far.estimate.out_path = dir.file("far.json");
  CHECK(run(far) == 3);
}

TEST_CASE("run moments writes an all-pass table") {
  TempDir dir;
  RunConfig rc;
  rc.sub = Subcommand::Moments;
  rc.moments.d = 2;
  rc.moments.delta = 0.0;
  rc.moments.eps = 0.1;
  rc.moments.mc_samples = 50000;
  rc.moments.seed = 1;
  rc.moments.report_path = dir.file("moments.csv");
  REQUIRE(run(rc) == 0);
  const std::string csv = read_text(rc.moments.report_path);
  CHECK(csv.find("name,closed_form,quadrature,mc,mc_stderr,pass") == 0);
  // every row passes
  std::size_t rows = 0;
  for (std::size_t pos = csv.find('\n'); pos != std::string::npos;
       pos = csv.find('\n', pos + 1)) {
    const std::size_t next = csv.find('\n', pos + 1);
    if (next == std::string::npos) break;
    const std::string line = csv.substr(pos + 1, next - pos - 1);
    if (line.empty()) continue;
    CHECK(line.substr(line.size() - 2) == ",1");
    ++rows;
  }
  CHECK(rows >= 17);
}

TEST_CASE("run converge writes a parseable report") {
  TempDir dir;
  RunConfig rc;
  rc.sub = Subcommand::Converge;
  rc.converge.conv = parse_converge_config(Json::parse(R"({
    "model": "sphere",
    "field": "ambient_mixed",
    "eps_grid": [0.5, 0.4, 0.3],
    "n_rule": {"c": 6, "n_at_eps_max": 4000},
    "query": {"type": "interior", "count": 6},
    "repetitions": 1,
    "seed": 3
  })"));
  rc.converge.out_prefix = dir.file("conv");
  REQUIRE(run(rc) == 0);
  const Json rep = Json::parse(read_text(dir.file("conv_report.json")));
  CHECK(rep.at("per_eps").size() == 3);
  CHECK(rep.at("slopes").contains("hess_frob"));
  const std::string raw = read_text(dir.file("conv_raw.csv"));
  CHECK(raw.find("eps,n,point_id,e_f,e_grad,e_hess_frob,e_trace,k_z") == 0);
  // re-run is bit-identical (no hidden state)
  const std::string rep1 = read_text(dir.file("conv_report.json"));
  REQUIRE(run(rc) == 0);
  CHECK(read_text(dir.file("conv_report.json")) == rep1);
}

TEST_CASE("run gram writes the block table") {
  TempDir dir;
  RunConfig rc;
  rc.sub = Subcommand::Gram;
  rc.gram.gram = parse_gram_config(Json::parse(R"({
    "model": {"name": "flat_disk", "d": 2, "p": 2},
    "eps_grid": [0.4, 0.3],
    "n_rule": {"c": 8, "n_at_eps_max": 5000},
    "repetitions": 1,
    "query_count": 2,
    "seed": 9
  })"));
  rc.gram.out_path = dir.file("gram.csv");
  REQUIRE(run(rc) == 0);
  const std::string csv = read_text(rc.gram.out_path);
  CHECK(csv.find("block,eps,n,max_abs_dev") == 0);
  CHECK(csv.find("DD,") != std::string::npos);
}

TEST_CASE("invalid config exits with status 2 semantics") {
  CHECK_THROWS_AS(parse_config("{not json"), ParseError);
  CHECK_THROWS_AS(parse_config(R"({"subcommand":"fly"})"), ValidationError);
  // run() maps validation failures to exit code 2
  RunConfig rc;
  rc.sub = Subcommand::Converge;
  rc.converge.conv.eps_grid = {0.4, 0.3, 0.2};
  rc.converge.conv.model = ManifoldModel::sphere(2);
  rc.converge.conv.density = DensityModel::uniform(rc.converge.conv.model);
  rc.converge.conv.field = field_by_name(rc.converge.conv.model, "ambient_axis");
  rc.converge.conv.n_rule.c = 2.0;  // below d + 4
  rc.converge.conv.query.count = 2;
  CHECK(run(rc) == 2);
}
