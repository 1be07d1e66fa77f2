#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <string>
#include <vector>

#include "support.hpp"
#include "uapod/pipeline.hpp"

using namespace uapod;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("uapod_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::vector<unsigned char> read_bytes(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

RunConfig small_config(const fs::path& out) {
  RunConfig c = parse_config(
      "width = 8\nheight = 8\nT = 4\nk_max = 4\nkrylov_dim = 12\nimage_kmax = 3\nflow_kmax = 2\n");
  c.output_dir = out.string();
  return c;
}

}  // namespace

TEST(Config, EmptyTextGivesDefaults) {
  const RunConfig c = parse_config("");
  EXPECT_EQ(c.width, 32);
  EXPECT_EQ(c.height, 32);
  EXPECT_EQ(c.T, 20);
  EXPECT_EQ(c.M, 1);
  EXPECT_EQ(c.k_max, 20);
  EXPECT_EQ(c.krylov_dim, 60);
  EXPECT_FALSE(c.sigma2.has_value());
  EXPECT_FALSE(c.lambda.has_value());
  EXPECT_EQ(c.fig1_index(), 10);
}

TEST(Config, ParsesValuesCommentsAndAuto) {
  const RunConfig c = parse_config(
      "# run\n  T = 20  \nsigma2 = 0.25 # fixed noise\nlambda = auto\nseed = 7\n\nfig1_t = 3\n");
  EXPECT_EQ(c.T, 20);
  ASSERT_TRUE(c.sigma2.has_value());
  EXPECT_EQ(*c.sigma2, 0.25);
  EXPECT_FALSE(c.lambda.has_value());
  EXPECT_EQ(c.seed, 7u);
  EXPECT_EQ(c.fig1_index(), 3);
}

TEST(Config, ErrorsNameLineOrField) {
  try {
    parse_config("T = 5\nbogus = 1\n");
    FAIL() << "unknown key accepted";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
  EXPECT_THROW(parse_config("T 20\n"), ParseError);
  EXPECT_THROW(parse_config("T = 2x\n"), ParseError);
  try {
    parse_config("T = -1\n");
    FAIL() << "negative T accepted";
  } catch (const ValidationError& e) {
    EXPECT_EQ(e.field(), "T");
  }
  EXPECT_THROW(parse_config("k_max = 70\n"), ValidationError);
  EXPECT_THROW(parse_config("width = 4\nheight = 4\nkrylov_dim = 40\nk_max = 4\n"), ValidationError);
  EXPECT_THROW(parse_config("M = 0\n"), ValidationError);
  EXPECT_THROW(parse_config("fig1_t = 21\n"), ValidationError);
}

TEST(FieldDump, MinimalFileIs36Bytes) {
  const fs::path dir = scratch_dir("min");
  dump_field(dir / "z.fld", Vector::Zero(1), {1, 1, 1});
  const auto bytes = read_bytes(dir / "z.fld");
  ASSERT_EQ(bytes.size(), 36u);
  const unsigned char magic[16] = {'U', 'A', 'P', 'O', 'D', 'F', 'L', 'D', 0, 0, 0, 0, 0, 0, 0, 1};
  EXPECT_EQ(std::memcmp(bytes.data(), magic, 16), 0);
  const unsigned char dims[12] = {1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0};
  EXPECT_EQ(std::memcmp(bytes.data() + 16, dims, 12), 0);
  for (std::size_t i = 28; i < 36; ++i) EXPECT_EQ(bytes[i], 0u);
}

TEST(FieldDump, LittleEndianPayload) {
  Vector one(1);
  one << 1.0;
  const auto bytes = encode_field(one, {1, 1, 1});
  // 1.0 = 0x3ff0000000000000
  const unsigned char want[8] = {0, 0, 0, 0, 0, 0, 0xf0, 0x3f};
  EXPECT_EQ(std::memcmp(bytes.data() + 28, want, 8), 0);
  const auto wide = encode_field(Vector::Zero(300 * 2), {300, 1, 2});
  EXPECT_EQ(wide[16], 0x2cu);
  EXPECT_EQ(wide[17], 0x01u);
  EXPECT_EQ(wide[24], 2u);
}

TEST(FieldDump, RoundTripIsBitwise) {
  const fs::path dir = scratch_dir("roundtrip");
  std::mt19937_64 rng(5);
  Vector v = random_normal(7 * 5 * 3, rng);
  v[0] = -0.0;
  v[1] = std::numeric_limits<double>::denorm_min();
  v[2] = std::numeric_limits<double>::infinity();
  v[3] = std::nan("");
  dump_field(dir / "f.fld", v, {7, 5, 3});
  const Field back = load_field(dir / "f.fld");
  EXPECT_EQ(back.dims, (FieldDims{7, 5, 3}));
  ASSERT_EQ(back.values.size(), v.size());
  EXPECT_EQ(std::memcmp(back.values.data(), v.data(), sizeof(double) * v.size()), 0);
}

TEST(FieldDump, VelocityInterleaving) {
  const fs::path dir = scratch_dir("interleave");
  const Grid2D g(4, 4);
  // Blocked velocity on a 4x4 grid; only the first 2x2 pixels matter here.
  Vector blocked = Vector::Zero(g.velocity_dim());
  const Index m = g.pixels();
  for (Index s = 0; s < m; ++s) {
    blocked[s] = 10.0 + s;
    blocked[m + s] = 20.0 + s;
  }
  dump_field(dir / "v.fld", interleave_components(blocked), {4, 4, 2});
  const auto bytes = read_bytes(dir / "v.fld");
  auto value_at = [&](std::size_t i) {
    double d;
    std::memcpy(&d, bytes.data() + 28 + 8 * i, 8);
    return d;
  };
  EXPECT_EQ(value_at(0), 10.0);
  EXPECT_EQ(value_at(1), 20.0);
  EXPECT_EQ(value_at(2), 11.0);
  EXPECT_EQ(value_at(3), 21.0);
  EXPECT_EQ(value_at(2 * 4), 14.0);  // pixel (0, 1)
  EXPECT_EQ(value_at(2 * 4 + 1), 24.0);
  const Field back = load_field(dir / "v.fld");
  EXPECT_EQ(deinterleave_components(back.values), blocked);

  // A true 2x2x2 field keeps (u, v) adjacent per pixel.
  Vector small(8);
  small << 1, 2, 3, 4, 5, 6, 7, 8;
  dump_field(dir / "s.fld", small, {2, 2, 2});
  EXPECT_EQ(load_field(dir / "s.fld").values, small);
}

TEST(FieldDump, Errors) {
  const fs::path dir = scratch_dir("errors");
  EXPECT_THROW(dump_field(dir / "x.fld", Vector::Zero(3), {2, 2, 1}), DimensionMismatch);
  EXPECT_THROW(dump_field(dir / "missing" / "x.fld", Vector::Zero(1), {1, 1, 1}), IoError);
  std::ofstream(dir / "bad.fld") << "not a dump";
  EXPECT_THROW(load_field(dir / "bad.fld"), IoError);
  auto bytes = encode_field(Vector::Zero(4), {2, 2, 1});
  bytes.pop_back();
  EXPECT_THROW(decode_field(bytes), IoError);
}

TEST(Pipeline, SmallRunIsDeterministicAndWellFormed) {
  const fs::path a = scratch_dir("det_a");
  const fs::path b = scratch_dir("det_b");
  const auto ra = run_pipeline(small_config(a));
  run_pipeline(small_config(b));
  for (const char* name :
       {"error_curve.csv", "truth_fig1.fld", "posterior_mean_fig1.fld", "covariance_map_fig1.fld",
        "error_map_fig1.fld", "basis_snapshot.fld", "basis_posterior.fld", "basis_groundtruth.fld"}) {
    const auto x = read_bytes(a / name);
    ASSERT_FALSE(x.empty()) << name;
    EXPECT_EQ(x, read_bytes(b / name)) << name;
  }

  ASSERT_EQ(ra.curve.rows.size(), 4u);
  std::ifstream csv(a / "error_curve.csv");
  std::string header;
  std::getline(csv, header);
  EXPECT_EQ(header, "k,error_snapshot,error_posterior,error_groundtruth");
  for (std::size_t i = 0; i < ra.curve.rows.size(); ++i) {
    const auto& r = ra.curve.rows[i];
    EXPECT_EQ(r.k, static_cast<Index>(i + 1));
    for (double e : {r.snapshot, r.posterior, r.groundtruth}) {
      EXPECT_GE(e, 0.0);
      EXPECT_LE(e, 1.0);
    }
    EXPECT_LE(r.groundtruth, r.snapshot + 1e-12);
    if (i > 0) {
      const auto& p = ra.curve.rows[i - 1];
      EXPECT_LE(r.snapshot, p.snapshot + 1e-12);
      EXPECT_LE(r.posterior, p.posterior + 1e-12);
      EXPECT_LE(r.groundtruth, p.groundtruth + 1e-12);
    }
  }

  const auto meta = nlohmann::json::parse(std::ifstream(a / "run_metadata.json"));
  EXPECT_EQ(meta["config"]["width"], 8);
  EXPECT_GT(meta["resolved"]["sigma2"].get<double>(), 0.0);
  EXPECT_GT(meta["resolved"]["lambda"].get<double>(), 0.0);
  EXPECT_EQ(meta["resolved"]["fig1_t"], 2);
}

TEST(Pipeline, SeedChangesOutput) {
  RunConfig c = small_config(scratch_dir("seed"));
  PipelineOptions quiet{false, false};
  const auto r1 = run_pipeline(c, quiet);
  c.seed = 2;
  const auto r2 = run_pipeline(c, quiet);
  EXPECT_NE(r1.curve.to_csv(), r2.curve.to_csv());
}

TEST(Pipeline, CompleteBasisReconstructsExactly) {
  RunConfig c = parse_config("width = 4\nheight = 4\nT = 3\nk_max = 32\nkrylov_dim = 32\n");
  c.output_dir = scratch_dir("complete").string();
  const auto r = run_pipeline(c, {false, false});
  const auto& last = r.curve.rows.back();
  EXPECT_EQ(last.k, 32);
  EXPECT_LE(last.posterior, 1e-8);
  // The ground-truth basis has rank T and already spans the trajectory.
  EXPECT_LE(last.groundtruth, 1e-8);
  EXPECT_LE(r.curve.rows[2].groundtruth, 1e-8);
}

TEST(Pipeline, StageNamedFailure) {
  RunConfig c = small_config(scratch_dir("fail"));
  c.cg_max_iter = 1;
  c.cg_tol = 1e-14;
  try {
    run_pipeline(c, {false, false});
    FAIL() << "expected a pipeline error";
  } catch (const PipelineError& e) {
    EXPECT_EQ(e.stage(), "posterior");
  }
}

TEST(VanishingNoise, PosteriorBasisMatchesGroundTruth) {
  // Fully observed (H = I) and nearly noiseless: posterior-aware and
  // ground-truth POD agree.
  const Index n = 30;
  const Index T = 8;
  std::mt19937_64 rng(12);
  const Matrix truth = uapod::testing::random_matrix(n, 3, rng) * uapod::testing::random_matrix(3, T, rng) +
                       0.05 * uapod::testing::random_matrix(n, T, rng);
  const Matrix q = uapod::testing::random_spd(n, rng);
  const double s2 = 1e-10;
  std::normal_distribution<double> noise(0.0, std::sqrt(s2));
  std::vector<GaussianPosterior> posts;
  for (Index t = 0; t < T; ++t) {
    Vector y = truth.col(t);
    for (Index i = 0; i < n; ++i) y[i] += noise(rng);
    LinearObservation obs{LinearMap::from_matrix(Matrix::Identity(n, n)), Vector::Zero(n), s2, y};
    posts.push_back(posterior_factorized({SymmetricOperator::from_matrix(q), std::nullopt}, obs,
                                         {1e-12, 1000, true}));
  }
  const StateTrajectory x(truth);
  const SecondMomentOperator s(posts);
  const auto gt = snapshot_basis(x, T);
  for (Index k = 1; k <= T; ++k) {
    const auto post = uncertainty_aware_basis(s, k, std::min<Index>(n, 4 * k), 1);
    EXPECT_NEAR(reconstruction_error(x, post), reconstruction_error(x, gt.truncated(k)), 1e-3) << k;
  }
}
