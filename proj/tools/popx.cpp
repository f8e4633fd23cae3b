// popx command-line front end.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "popx/bridge.hpp"
#include "popx/guidelines.hpp"
#include "popx/harness.hpp"
#include "popx/model_io.hpp"

namespace fs = std::filesystem;
using namespace popx;

namespace {

struct Globals {
  std::optional<std::uint64_t> seed;
  std::string config;
  std::string out = ".";
};

std::uint64_t require_seed(const Globals& g, const char* cmd) {
  if (!g.seed) throw Error(std::string(cmd) + ": --seed is required");
  return *g.seed;
}

fs::path out_dir(const Globals& g) {
  fs::path dir(g.out);
  fs::create_directories(dir);
  return dir;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write '" + path.string() + "'");
  f << text;
}

EncodedMatrix read_matrix_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open matrix '" + path + "'");
  return read_matrix_csv(in);
}

std::map<std::string, std::string> parse_params(const std::vector<std::string>& kv) {
  std::map<std::string, std::string> out;
  for (const auto& s : kv) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw Error("--param expects name=value, got '" + s + "'");
    out[trim(s.substr(0, eq))] = trim(s.substr(eq + 1));
  }
  return out;
}

ReportFormat parse_format(const std::string& s) {
  if (s == "table") return ReportFormat::kTable;
  if (s == "csv") return ReportFormat::kCsv;
  throw Error("unknown format '" + s + "' (table or csv)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Process outcome prediction explainability toolkit"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "Master seed (required for stochastic commands)");
  app.add_option("--config", g.config, "Config file");
  app.add_option("--out", g.out, "Output directory");

  // encode
  std::string log_path, schema_path;
  std::size_t max_prefix = 10;
  double train_ratio = 0.8;
  auto* encode = app.add_subcommand("encode", "Split a log in time and write train/test matrices");
  encode->add_option("--log", log_path, "Event log CSV")->required();
  encode->add_option("--schema", schema_path, "Schema config")->required();
  encode->add_option("--max-prefix", max_prefix, "Longest prefix to encode");
  encode->add_option("--train-ratio", train_ratio, "Fraction of cases (by start time) used for training");

  // train
  std::string matrix_path, kind_name = "logreg";
  std::vector<std::string> params;
  auto* train = app.add_subcommand("train", "Train a model on an encoded matrix");
  train->add_option("--matrix", matrix_path, "Labelled matrix CSV")->required();
  train->add_option("--model", kind_name, "logreg, tree, forest or llm");
  train->add_option("--param", params, "Hyperparameter name=value (repeatable)");

  // evaluate
  std::string model_path, predictions_path;
  auto* evaluate = app.add_subcommand("evaluate", "Score a model on a matrix and report AUC");
  evaluate->add_option("--model", model_path, "Model file")->required();
  evaluate->add_option("--matrix", matrix_path, "Matrix CSV")->required();
  evaluate->add_option("--predictions", predictions_path, "Also write one probability per line here");

  // metrics
  std::string weights_path, format_name = "table";
  std::size_t repeats = 1;
  auto* metrics = app.add_subcommand("metrics", "Compute explainability metrics for a model on a matrix");
  metrics->add_option("--model", model_path, "Model file")->required();
  metrics->add_option("--matrix", matrix_path, "Labelled matrix CSV")->required();
  metrics->add_option("--weights", weights_path, "attribute,weight file (required for external models)");
  metrics->add_option("--repeats", repeats, "Permutation repeats");
  metrics->add_option("--format", format_name, "table or csv");

  // guide
  std::string answers;
  auto* guide = app.add_subcommand("guide", "Model-selection questionnaire");
  guide->add_option("--answers", answers, "Comma-separated y/n answers in the order questions are asked");

  // synth
  std::string rule_text;
  std::optional<std::size_t> n_cases;
  std::optional<double> noise;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic log with a planted rule");
  synth->add_option("--rule", rule_text, "e.g. control_presence(A) or case_threshold(s1,0.5)");
  synth->add_option("--cases", n_cases, "Number of cases");
  synth->add_option("--noise", noise, "Label flip probability");

  // bench
  auto* bench = app.add_subcommand("bench", "Run the benchmark described by --config");

  // report
  std::string input;
  auto* report = app.add_subcommand("report", "Re-render a report CSV");
  report->add_option("input", input, "Report CSV")->required();
  report->add_option("--format", format_name, "table or csv");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*encode) {
      const auto schema = load_schema(schema_path);
      const auto prep = prepare_log(load_csv(log_path, schema), max_prefix, train_ratio);
      const auto dir = out_dir(g);
      for (const auto& [name, m] : {std::pair{"train_matrix.csv", &prep.train}, std::pair{"test_matrix.csv", &prep.test}}) {
        std::ostringstream s;
        write_matrix_csv(s, *m, !m->labels.empty());
        write_file(dir / name, s.str());
      }
      std::cout << "train rows " << prep.train.rows() << ", test rows " << prep.test.rows() << ", columns "
                << prep.train.cols() << '\n';
    } else if (*train) {
      const auto kind = parse_model_kind(kind_name);
      const std::uint64_t seed = kind == ModelKind::kForest ? require_seed(g, "train") : g.seed.value_or(0);
      const auto m = read_matrix_file(matrix_path);
      const auto model = train_model(kind, m, parse_params(params), seed);
      const auto path = out_dir(g) / "model.txt";
      save_model_file(path.string(), model);
      std::cout << "training AUC " << format_double(model.training_auc) << ", saved " << path.string() << '\n';
    } else if (*evaluate) {
      const auto model = load_model_file(model_path);
      const auto m = read_matrix_file(matrix_path);
      const auto p = model.predict_proba(m);
      if (!predictions_path.empty()) {
        std::ostringstream s;
        for (double v : p) s << format_double(v) << '\n';
        write_file(predictions_path, s.str());
      }
      if (!m.labels.empty()) std::cout << "AUC " << format_double(auc(m.labels, p)) << '\n';
      else std::cout << "matrix has no labels; wrote " << p.size() << " predictions\n";
    } else if (*metrics) {
      const std::uint64_t seed = require_seed(g, "metrics");
      const auto model = load_model_file(model_path);
      const auto m = read_matrix_file(matrix_path);
      if (m.labels.empty()) throw Error("metrics: matrix has no labels");
      std::vector<std::string> warnings;
      const WeightVector w_e = weights_path.empty() ? intrinsic_weights(model)
                                                    : load_external_weights_file(weights_path, m.signature(), &warnings);
      for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
      MetricsReport rep;
      rep.log_id = matrix_path;
      rep.model_id = std::string(to_string(model.kind));
      rep.seed = seed;
      rep.auc = auc(m.labels, model.predict_proba(m));
      compute_xai_metrics(rep, model, w_e, m, seed, repeats, 0);
      std::cout << render_report({rep}, parse_format(format_name));
    } else if (*guide) {
      if (answers.empty()) {
        guidelines::interactive_guide(std::cin, std::cout);
      } else {
        std::vector<bool> a;
        for (const auto& s : detail::split_list(answers)) {
          const auto v = guidelines::parse_answer(s);
          if (!v) throw Error("guide: answer '" + s + "' is not y or n");
          a.push_back(*v);
        }
        guidelines::print_recommendation(std::cout, guidelines::guide_from_answers(a));
      }
    } else if (*synth) {
      SynthSpec spec;
      if (!g.config.empty()) {
        std::ifstream in(g.config);
        if (!in) throw Error("cannot open '" + g.config + "'");
        for (const auto& section : config::parse(in)) spec = parse_synth_spec(section, spec);
      }
      spec.seed = require_seed(g, "synth");
      if (!rule_text.empty()) spec.rule = parse_rule(rule_text);
      if (n_cases) spec.n_cases = *n_cases;
      if (noise) spec.label_noise = *noise;
      const auto log = generate_log(spec);
      const auto dir = out_dir(g);
      std::ostringstream csv_text, schema_text;
      write_csv(csv_text, log);
      write_schema(schema_text, log.schema);
      write_file(dir / "log.csv", csv_text.str());
      write_file(dir / "schema.cfg", schema_text.str());
      std::cout << "wrote " << log.traces.size() << " cases to " << (dir / "log.csv").string() << '\n';
    } else if (*bench) {
      if (g.config.empty()) throw Error("bench: --config is required");
      auto cfg = load_benchmark_config(g.config);
      if (g.seed) {
        cfg.seed = *g.seed;
        cfg.seed_given = true;
      }
      if (app.get_option("--out")->count() > 0 || cfg.output_dir.empty()) cfg.output_dir = g.out;
      const auto reports = run_benchmark(cfg);
      fs::create_directories(cfg.output_dir);
      const auto table = render_report(reports, ReportFormat::kTable);
      write_file(fs::path(cfg.output_dir) / "report.csv", render_report(reports, ReportFormat::kCsv));
      write_file(fs::path(cfg.output_dir) / "report.txt", table);
      std::cout << table;
    } else if (*report) {
      std::ifstream in(input, std::ios::binary);
      if (!in) throw Error("cannot open '" + input + "'");
      std::cout << render_report(parse_report_csv(in), parse_format(format_name));
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
