#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "popx/synth.hpp"

using namespace popx;

namespace {

std::string csv_of(const EventLog& log) {
  std::ostringstream s;
  write_csv(s, log);
  return s.str();
}

config::Section section(std::vector<std::pair<std::string, std::string>> kv) {
  config::Section s;
  std::size_t line = 1;
  for (auto& [k, v] : kv) s.entries.push_back({k, v, line++});
  return s;
}

}  // namespace

TEST(Synth, ForcedPresenceIsDeviant) {
  SynthSpec spec;
  spec.alphabet_size = 1;  // every trace consists of A only
  spec.n_cases = 50;
  spec.seed = 3;
  const auto log = generate_log(spec);
  ASSERT_EQ(log.traces.size(), 50u);
  for (const auto& t : log.traces) EXPECT_EQ(t.label, 1);
}

TEST(Synth, SameSeedIsByteIdentical) {
  SynthSpec spec;
  spec.n_cases = 200;
  spec.label_noise = 0.1;
  spec.seed = 99;
  EXPECT_EQ(csv_of(generate_log(spec)), csv_of(generate_log(spec)));
  auto other = spec;
  other.seed = 100;
  EXPECT_NE(csv_of(generate_log(spec)), csv_of(generate_log(other)));
}

TEST(Synth, CaseThresholdBaseRate) {
  SynthSpec spec;
  spec.rule = Rule::case_threshold("s1", 0.5);
  spec.seed = 5;
  const auto log = generate_log(spec);
  double rate = 0;
  for (const auto& t : log.traces) rate += *t.label;
  rate /= static_cast<double>(log.traces.size());
  // s1 = floor(U * 1e6) / 1e6 exceeds 0.5 for 499999 of the 1e6 grid points.
  const double p = 499999.0 / 1e6;
  EXPECT_NEAR(rate, p, 3 * std::sqrt(p * (1 - p) / 1000.0));
}

TEST(Synth, NoiseFreeLabelsFollowTheRule) {
  for (const char* text : {"control_presence(B)", "control_follows(A,C)", "case_threshold(s1,0.3)",
                           "event_mean_threshold(d1,0.5)"}) {
    SynthSpec spec;
    spec.n_cases = 300;
    spec.rule = parse_rule(text);
    spec.seed = 11;
    const auto log = generate_log(spec);
    int positives = 0;
    for (const auto& t : log.traces) {
      ASSERT_EQ(*t.label, evaluate_rule(spec.rule, t)) << text;
      positives += *t.label;
    }
    EXPECT_GT(positives, 0) << text;
    EXPECT_LT(positives, 300) << text;
  }
}

TEST(Synth, NoiseFlipsAboutTheRequestedFraction) {
  SynthSpec spec;
  spec.n_cases = 4000;
  spec.label_noise = 0.2;
  spec.seed = 17;
  const auto log = generate_log(spec);
  double flipped = 0;
  for (const auto& t : log.traces) flipped += *t.label != evaluate_rule(spec.rule, t);
  EXPECT_NEAR(flipped / 4000.0, 0.2, 3 * std::sqrt(0.2 * 0.8 / 4000.0));
}

TEST(Synth, StructuralInvariants) {
  SynthSpec spec;
  spec.n_cases = 100;
  spec.min_length = 2;
  spec.max_length = 5;
  spec.seed = 8;
  const auto log = generate_log(spec);
  for (const auto& t : log.traces) {
    ASSERT_GE(t.events.size(), 2u);
    ASSERT_LE(t.events.size(), 5u);
    for (std::size_t i = 1; i < t.events.size(); ++i) {
      EXPECT_GT(t.events[i].timestamp, t.events[i - 1].timestamp);
      EXPECT_EQ(t.events[i].statics, t.events[0].statics);
    }
  }
}

TEST(Synth, WrittenLogParsesBack) {
  SynthSpec spec;
  spec.n_cases = 40;
  spec.seed = 21;
  const auto log = generate_log(spec);
  std::istringstream in(csv_of(log));
  const auto back = parse_csv(in, log.schema);
  EXPECT_EQ(csv_of(back), csv_of(log));
}

TEST(Synth, ValidationErrors) {
  auto bad = [](auto mutate) {
    SynthSpec spec;
    mutate(spec);
    EXPECT_THROW(generate_log(spec), Error);
  };
  bad([](SynthSpec& s) { s.n_cases = 0; });
  bad([](SynthSpec& s) { s.min_length = 5, s.max_length = 4; });
  bad([](SynthSpec& s) { s.label_noise = 0.5; });
  bad([](SynthSpec& s) { s.rule = Rule::control_presence("Z"); });
  bad([](SynthSpec& s) { s.rule = Rule::control_follows("A", "A"); });
  bad([](SynthSpec& s) { s.rule = Rule::case_threshold("s2", 0.5); });
  bad([](SynthSpec& s) { s.rule = Rule::event_mean_threshold("s1", 0.5); });
}

TEST(Synth, ParseRule) {
  EXPECT_EQ(parse_rule("control_follows(A, B)").to_text(), "control_follows(A,B)");
  EXPECT_EQ(parse_rule(" case_threshold(s1,0.25) ").to_text(), "case_threshold(s1,0.25)");
  EXPECT_EQ(parse_rule("event_mean_threshold(d1,1)").dominant_type(), AttributeType::kEvent);
  EXPECT_THROW(parse_rule("control_presence"), Error);
  EXPECT_THROW(parse_rule("sometimes(A)"), Error);
  EXPECT_THROW(parse_rule("case_threshold(s1)"), Error);
}

TEST(Synth, ParseSpec) {
  const auto spec = parse_synth_spec(section({{"n_cases", "12"}, {"rule", "control_presence(C)"}, {"label_noise", "0.1"}}));
  EXPECT_EQ(spec.n_cases, 12u);
  EXPECT_EQ(spec.rule.to_text(), "control_presence(C)");
  EXPECT_EQ(spec.label_noise, 0.1);
  EXPECT_THROW(parse_synth_spec(section({{"n_cases", "1.5"}})), Error);
  EXPECT_THROW(parse_synth_spec(section({{"colour", "red"}})), Error);
}
