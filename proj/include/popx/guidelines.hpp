#pragma once

// Model-selection guidelines: a fixed question tree that maps priorities on
// performance, parsimony and faithfulness to a recommended model.

#include <array>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "popx/common.hpp"

namespace popx::guidelines {

enum class Question {
  kExplainabilityOverPerformance,
  kParsimonyVeryImportant,
  kIrcUnimportant,
  kFaithfulnessImportant,
  kParsimonyUnimportant,
  kLodLowRequired,
  kDataHeterogeneous,
};

inline constexpr std::size_t kQuestionCount = 7;

inline std::string_view question_text(Question q) {
  switch (q) {
    case Question::kExplainabilityOverPerformance:
      return "Is explainability a lot more important than predictive performance?";
    case Question::kParsimonyVeryImportant: return "Is parsimony very important?";
    case Question::kIrcUnimportant: return "Is the metric IRC unimportant?";
    case Question::kFaithfulnessImportant: return "Is faithfulness important?";
    case Question::kParsimonyUnimportant: return "Is parsimony unimportant?";
    case Question::kLodLowRequired: return "Is a low value for LOD required?";
    case Question::kDataHeterogeneous: return "Is the data heterogeneous?";
  }
  return "?";
}

struct Questionnaire {
  bool explainability_over_performance = false;
  bool parsimony_very_important = false;
  bool irc_unimportant = false;
  bool faithfulness_important = false;
  bool parsimony_unimportant = false;
  bool lod_low_required = false;
  bool data_heterogeneous = false;

  bool answer(Question q) const {
    switch (q) {
      case Question::kExplainabilityOverPerformance: return explainability_over_performance;
      case Question::kParsimonyVeryImportant: return parsimony_very_important;
      case Question::kIrcUnimportant: return irc_unimportant;
      case Question::kFaithfulnessImportant: return faithfulness_important;
      case Question::kParsimonyUnimportant: return parsimony_unimportant;
      case Question::kLodLowRequired: return lod_low_required;
      case Question::kDataHeterogeneous: return data_heterogeneous;
    }
    return false;
  }

  /// Bit i of `bits` answers the i-th Question enumerator.
  static Questionnaire from_bits(unsigned bits) {
    Questionnaire q;
    q.explainability_over_performance = bits & 1u;
    q.parsimony_very_important = bits & 2u;
    q.irc_unimportant = bits & 4u;
    q.faithfulness_important = bits & 8u;
    q.parsimony_unimportant = bits & 16u;
    q.lod_low_required = bits & 32u;
    q.data_heterogeneous = bits & 64u;
    return q;
  }
};

enum class ModelLabel { kGLRM, kCNN, kLSTM, kXGB, kRF, kLLM, kLR };

inline std::string_view to_string(ModelLabel m) {
  switch (m) {
    case ModelLabel::kGLRM: return "GLRM";
    case ModelLabel::kCNN: return "CNN";
    case ModelLabel::kLSTM: return "LSTM";
    case ModelLabel::kXGB: return "XGB";
    case ModelLabel::kRF: return "RF";
    case ModelLabel::kLLM: return "LLM";
    case ModelLabel::kLR: return "LR";
  }
  return "?";
}

enum class Tendency { kGood, kPoor, kNeutral };

inline std::string_view to_string(Tendency t) {
  switch (t) {
    case Tendency::kGood: return "tends-good";
    case Tendency::kPoor: return "tends-poor";
    case Tendency::kNeutral: return "neutral";
  }
  return "?";
}

/// How a model family tends to score on each metric in benchmark findings.
struct MetricProfile {
  Tendency auc = Tendency::kNeutral;
  Tendency parsimony = Tendency::kNeutral;
  Tendency functional_complexity = Tendency::kNeutral;
  Tendency irc = Tendency::kNeutral;
  Tendency lod = Tendency::kNeutral;
};

struct Recommendation {
  ModelLabel model = ModelLabel::kLR;
  std::string rationale;
  MetricProfile profile;
  bool implemented_in_toolkit = false;
};

inline MetricProfile profile_of(ModelLabel m) {
  using T = Tendency;
  switch (m) {
    case ModelLabel::kGLRM: return {T::kPoor, T::kGood, T::kGood, T::kGood, T::kGood};
    case ModelLabel::kCNN: return {T::kPoor, T::kGood, T::kPoor, T::kPoor, T::kNeutral};
    case ModelLabel::kLSTM: return {T::kPoor, T::kGood, T::kPoor, T::kNeutral, T::kNeutral};
    case ModelLabel::kXGB: return {T::kGood, T::kNeutral, T::kNeutral, T::kGood, T::kGood};
    case ModelLabel::kRF: return {T::kGood, T::kPoor, T::kNeutral, T::kPoor, T::kPoor};
    case ModelLabel::kLLM: return {T::kGood, T::kGood, T::kNeutral, T::kPoor, T::kPoor};
    case ModelLabel::kLR: return {T::kGood, T::kGood, T::kNeutral, T::kPoor, T::kPoor};
  }
  return {};
}

inline bool implemented(ModelLabel m) {
  return m == ModelLabel::kRF || m == ModelLabel::kLLM || m == ModelLabel::kLR;
}

namespace detail {

inline Recommendation make(ModelLabel m, std::string rationale) {
  Recommendation r{m, std::move(rationale), profile_of(m), implemented(m)};
  if (!r.implemented_in_toolkit)
    r.rationale += " (not built in: attach a trained " + std::string(to_string(m)) +
                   " model through the external-model bridge)";
  return r;
}

}  // namespace detail

/// The next question on the path given the answers so far, or the final recommendation.
struct Step {
  std::optional<Question> question;
  std::optional<Recommendation> recommendation;
};

/// Walks the tree with whatever answers exist; stops at the first unanswered question.
inline Step walk(const std::vector<bool>& answers) {
  std::size_t i = 0;
  auto ask = [&](Question) -> std::optional<bool> {
    if (i < answers.size()) return answers[i++];
    return std::nullopt;
  };
  auto pending = [](Question q) { return Step{q, std::nullopt}; };
  auto done = [](ModelLabel m, std::string why) { return Step{std::nullopt, detail::make(m, std::move(why))}; };

  auto a = ask(Question::kExplainabilityOverPerformance);
  if (!a) return pending(Question::kExplainabilityOverPerformance);
  if (*a)
    return done(ModelLabel::kGLRM,
                "Explainability matters far more than predictive performance: GLRM tends to be parsimonious and "
                "faithful while keeping a reasonable AUC.");
  a = ask(Question::kParsimonyVeryImportant);
  if (!a) return pending(Question::kParsimonyVeryImportant);
  if (*a) {
    a = ask(Question::kIrcUnimportant);
    if (!a) return pending(Question::kIrcUnimportant);
    if (*a)
      return done(ModelLabel::kCNN,
                  "Parsimony is very important and IRC is not: prefer CNN over LSTM among the sequential deep "
                  "learning models.");
    return done(ModelLabel::kLSTM,
                "Parsimony is very important and IRC still matters: the LSTM keeps parsimony with more faithful "
                "rankings than the CNN.");
  }
  a = ask(Question::kFaithfulnessImportant);
  if (!a) return pending(Question::kFaithfulnessImportant);
  if (*a)
    return done(ModelLabel::kXGB,
                "Faithfulness is important: use XGB. GLRM is more faithful on average but XGB predicts better; "
                "pick GLRM if faithfulness outweighs AUC.");
  a = ask(Question::kParsimonyUnimportant);
  if (!a) return pending(Question::kParsimonyUnimportant);
  if (*a) return done(ModelLabel::kRF, "Parsimony is unimportant: RF suits models that use all the attributes.");
  a = ask(Question::kLodLowRequired);
  if (!a) return pending(Question::kLodLowRequired);
  if (*a) return done(ModelLabel::kXGB, "A low level of disagreement (LOD) is required: use XGB.");
  a = ask(Question::kDataHeterogeneous);
  if (!a) return pending(Question::kDataHeterogeneous);
  if (*a)
    return done(ModelLabel::kLLM,
                "Parsimony still matters and the data is heterogeneous: the logit leaf model segments the data "
                "before fitting linear models.");
  return done(ModelLabel::kLR, "Parsimony still matters and the data is homogeneous: logistic regression.");
}

/// Questions on the path selected by `q`, in the order they are asked.
inline std::vector<Question> path(const Questionnaire& q) {
  std::vector<Question> asked;
  std::vector<bool> answers;
  for (;;) {
    const Step s = walk(answers);
    if (!s.question) return asked;
    asked.push_back(*s.question);
    answers.push_back(q.answer(*s.question));
  }
}

inline Recommendation recommend(const Questionnaire& q) {
  std::vector<bool> answers;
  for (Question asked : path(q)) answers.push_back(q.answer(asked));
  return *walk(answers).recommendation;
}

inline constexpr std::string_view kDisclaimer =
    "These guidelines summarise tendencies seen across benchmark logs; they are a starting point, not a strict rule.";

inline void print_recommendation(std::ostream& out, const Recommendation& r) {
  out << "Recommended model: " << to_string(r.model) << '\n';
  out << "Why: " << r.rationale << '\n';
  out << "Metric tendencies: AUC " << to_string(r.profile.auc) << ", parsimony " << to_string(r.profile.parsimony)
      << ", FC " << to_string(r.profile.functional_complexity) << ", IRC " << to_string(r.profile.irc) << ", LOD "
      << to_string(r.profile.lod) << '\n';
  out << "Built into this toolkit: " << (r.implemented_in_toolkit ? "yes" : "no") << '\n';
  out << "Note: " << kDisclaimer << '\n';
}

inline std::optional<bool> parse_answer(std::string_view s) {
  const std::string t = trim(s);
  if (t == "y" || t == "Y" || t == "yes" || t == "Yes" || t == "YES") return true;
  if (t == "n" || t == "N" || t == "no" || t == "No" || t == "NO") return false;
  return std::nullopt;
}

/// Asks only the questions on the active path; invalid input re-prompts.
/// `asked` (optional) receives the questions in the order they were posed.
inline Recommendation interactive_guide(std::istream& in, std::ostream& out, std::vector<Question>* asked = nullptr) {
  std::vector<bool> answers;
  for (;;) {
    const Step s = walk(answers);
    if (s.recommendation) {
      print_recommendation(out, *s.recommendation);
      return *s.recommendation;
    }
    if (asked) asked->push_back(*s.question);
    for (;;) {
      out << question_text(*s.question) << " [y/n] " << std::flush;
      std::string line;
      if (!std::getline(in, line)) throw Error("guide: input ended before the questionnaire was complete");
      if (auto a = parse_answer(line)) {
        answers.push_back(*a);
        break;
      }
      out << "Please answer y or n.\n";
    }
  }
}

/// Batch mode: answers are consumed in the order questions are asked.
inline Recommendation guide_from_answers(const std::vector<bool>& answers) {
  const Step s = walk(answers);
  if (!s.recommendation)
    throw Error("guide: not enough answers; next question: " + std::string(question_text(*s.question)));
  std::size_t used = 0;
  while (!walk(std::vector<bool>(answers.begin(), answers.begin() + static_cast<std::ptrdiff_t>(used))).recommendation)
    ++used;
  if (used != answers.size())
    throw Error("guide: " + std::to_string(answers.size() - used) + " answer(s) left over after the recommendation");
  return *s.recommendation;
}

}  // namespace popx::guidelines
