#include <gtest/gtest.h>

#include <chrono>
#include <cstdio>
#include <filesystem>

#include "popx/bridge.hpp"
#include "popx/model_io.hpp"
#include "popx/synth.hpp"
#include "test_helpers.hpp"

using namespace popx;

namespace {

EncodedMatrix small_matrix(std::size_t rows) {
  std::vector<std::vector<double>> r;
  std::vector<int> y;
  for (std::size_t i = 0; i < rows; ++i) {
    r.push_back({static_cast<double>(i), 0.5 * static_cast<double>(i % 3)});
    y.push_back(static_cast<int>(i % 2));
  }
  return popx::testing::make_matrix(2, r, y);
}

std::string message_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Bridge, ConstantScorer) {
  const auto m = small_matrix(7);
  const auto p = external_predict("awk 'NR > 1 { print \"0.5\" }'", m);
  EXPECT_EQ(p, std::vector<double>(7, 0.5));
}

TEST(Bridge, WireFormatHasNoLabelColumn) {
  const auto m = small_matrix(2);
  const auto r = run_process("cat", [&] {
    std::ostringstream s;
    write_matrix_csv(s, m, false);
    return s.str();
  }(), 10);
  EXPECT_EQ(r.out, "x0:control,x1:control\n0,0\n1,0.5\n");
}

TEST(Bridge, LineCountMismatch) {
  const auto m = small_matrix(5);
  const auto msg = message_of([&] { external_predict("awk 'NR > 2 { print \"0.5\" }'", m); });
  EXPECT_NE(msg.find("line count mismatch"), std::string::npos) << msg;
}

TEST(Bridge, RejectsOutOfRangeAndGarbage) {
  const auto m = small_matrix(3);
  EXPECT_THROW(external_predict("awk 'NR > 1 { print \"1.5\" }'", m), Error);
  EXPECT_THROW(external_predict("awk 'NR > 1 { print \"-0.1\" }'", m), Error);
  EXPECT_THROW(external_predict("awk 'NR > 1 { print \"nan\" }'", m), Error);
  EXPECT_THROW(external_predict("awk 'NR > 1 { print \"half\" }'", m), Error);
}

TEST(Bridge, NonzeroExit) {
  const auto m = small_matrix(3);
  const auto msg = message_of([&] { external_predict("cat > /dev/null; echo oops >&2; exit 3", m); });
  EXPECT_NE(msg.find("3"), std::string::npos) << msg;
}

TEST(Bridge, Timeout) {
  const auto m = small_matrix(3);
  const auto start = std::chrono::steady_clock::now();
  EXPECT_THROW(external_predict("sleep 10", m, 0.3), Error);
  EXPECT_LT(std::chrono::steady_clock::now() - start, std::chrono::seconds(5));
}

TEST(Bridge, CommandIgnoringLargeInputStillFails) {
  // The child exits without reading; the writer must not hang or die from SIGPIPE.
  const auto m = small_matrix(20000);
  EXPECT_THROW(external_predict("exit 0", m), Error);
}

TEST(Bridge, ExternalModelRoundTripsThroughModelFile) {
  const auto m = small_matrix(4);
  const auto model = make_external_model("awk 'NR > 1 { print \"0.25\" }'", m.columns, 30);
  std::ostringstream out;
  save_model(out, model);
  std::istringstream in(out.str());
  const auto back = load_model(in);
  EXPECT_EQ(back.command, model.command);
  EXPECT_EQ(back.predict_proba(m), std::vector<double>(4, 0.25));
}

TEST(Bridge, ScriptReimplementingLogRegMatchesInProcess) {
  const std::string python = POPX_PYTHON;
  if (python.empty()) GTEST_SKIP() << "python3 not found";
  SynthSpec spec;
  spec.n_cases = 60;
  spec.seed = 31;
  const auto log = generate_log(spec);
  auto m = aggregate_encode(extract_prefixes(log, 8), log.schema, fit_vocabulary(log));
  m.values.resize(200 * m.cols());
  m.labels.resize(200);
  m.origins.resize(200);
  ASSERT_EQ(m.rows(), 200u);
  const auto model = train_logreg(m);
  const auto path = std::filesystem::temp_directory_path() / "popx_bridge_logreg.txt";
  save_model_file(path.string(), model);
  const std::string cmd = python + " " + std::string(POPX_TEST_DIR) + "/scripts/logreg_scorer.py " + path.string();
  const auto external = ExternalPredictor(cmd, m.signature()).predict_proba(m);
  const auto internal = model.predict_proba(m);
  ASSERT_EQ(external.size(), internal.size());
  double worst = 0;
  for (std::size_t i = 0; i < internal.size(); ++i) worst = std::max(worst, std::abs(external[i] - internal[i]));
  EXPECT_LE(worst, 1e-9);
  std::filesystem::remove(path);
}
