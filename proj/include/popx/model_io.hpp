#pragma once

// Plain-text model dump. Tab-separated fields, one item per line:
//
//   model        <kind>
//   training_auc <auc>
//   column       <name> <type> <mean> <scale>        (one per column, in order)
//   intercept    <b>                                  (logreg)
//   coef         <name> <w>                           (logreg, one per column)
//   tree         <node count>                         (tree / forest / llm)
//     split <feature> <threshold> <n> <gini>          (pre-order, indented by depth)
//     leaf <leaf id> <prob> <n> <gini>
//   leaf_model   <leaf id> <support> constant <prob>  (llm)
//   leaf_model   <leaf id> <support> linear <b>       (llm, followed by leaf_coef lines)
//   leaf_coef    <name> <w>
//   command      <shell command>                      (external)
//   timeout      <seconds>                            (external)
//
// Numbers use the shortest round-trip decimal form, so save/load is lossless.

#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "popx/models.hpp"

namespace popx {

namespace detail {

inline void check_name(const std::string& name) {
  if (name.find_first_of("\t\n\r") != std::string::npos)
    throw Error("model export: column name contains a tab or newline: '" + name + "'");
}

inline void write_tree(std::ostream& out, const Tree& tree, std::size_t node, int depth) {
  const TreeNode& n = tree.nodes[node];
  out << std::string(static_cast<std::size_t>(2 * (depth + 1)), ' ');
  if (n.is_leaf()) {
    out << "leaf\t" << n.leaf_id << '\t' << format_double(n.prob) << '\t' << n.n << '\t' << format_double(n.impurity)
        << '\n';
    return;
  }
  out << "split\t" << n.feature << '\t' << format_double(n.threshold) << '\t' << n.n << '\t'
      << format_double(n.impurity) << '\n';
  write_tree(out, tree, static_cast<std::size_t>(n.left), depth + 1);
  write_tree(out, tree, static_cast<std::size_t>(n.right), depth + 1);
}

inline std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = line.find_first_not_of(' ');
  if (start == std::string::npos) return out;
  for (;;) {
    const auto tab = line.find('\t', start);
    out.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return out;
}

struct LineReader {
  std::istream& in;
  std::size_t line_no = 0;
  std::vector<std::string> fields;

  bool next() {
    std::string line;
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      fields = split_tabs(line);
      if (!fields.empty()) return true;
    }
    return false;
  }
  [[noreturn]] void fail(const std::string& msg) const {
    throw Error("model file line " + std::to_string(line_no) + ": " + msg);
  }
  void expect(std::string_view tag, std::size_t n) {
    if (!next()) fail("unexpected end of file, expected '" + std::string(tag) + "'");
    if (fields[0] != tag || fields.size() != n) fail("expected '" + std::string(tag) + "' with " + std::to_string(n - 1) + " fields");
  }
  double num(std::size_t i) const {
    auto v = try_parse_double(fields.at(i));
    if (!v) fail("not a number: '" + fields.at(i) + "'");
    return *v;
  }
  std::size_t count(std::size_t i) const {
    const double v = num(i);
    if (v < 0 || v != std::floor(v)) fail("not a count: '" + fields.at(i) + "'");
    return static_cast<std::size_t>(v);
  }
};

inline int read_tree_node(LineReader& r, Tree& tree, std::size_t p) {
  if (!r.next()) r.fail("unexpected end of tree");
  const int id = static_cast<int>(tree.nodes.size());
  TreeNode node;
  if (r.fields[0] == "leaf" && r.fields.size() == 5) {
    node.leaf_id = static_cast<int>(r.count(1));
    node.prob = r.num(2);
    node.n = r.count(3);
    node.impurity = r.num(4);
    tree.nodes.push_back(node);
    return id;
  }
  if (r.fields[0] != "split" || r.fields.size() != 5) r.fail("expected 'split' or 'leaf'");
  node.feature = static_cast<int>(r.count(1));
  if (static_cast<std::size_t>(node.feature) >= p) r.fail("split feature out of range");
  node.threshold = r.num(2);
  node.n = r.count(3);
  node.impurity = r.num(4);
  tree.nodes.push_back(node);
  const int l = read_tree_node(r, tree, p);
  tree.nodes[static_cast<std::size_t>(id)].left = l;
  const int rt = read_tree_node(r, tree, p);
  tree.nodes[static_cast<std::size_t>(id)].right = rt;
  return id;
}

}  // namespace detail

inline void save_model(std::ostream& out, const TrainedModel& model) {
  out << "model\t" << to_string(model.kind) << '\n';
  out << "training_auc\t" << (std::isnan(model.training_auc) ? "nan" : format_double(model.training_auc)) << '\n';
  for (std::size_t c = 0; c < model.columns.size(); ++c) {
    detail::check_name(model.columns[c].name);
    out << "column\t" << model.columns[c].name << '\t' << to_string(model.columns[c].type) << '\t'
        << format_double(model.scaler.mean[c]) << '\t' << format_double(model.scaler.scale[c]) << '\n';
  }
  switch (model.kind) {
    case ModelKind::kLogReg:
      out << "intercept\t" << format_double(model.linear.intercept) << '\n';
      for (std::size_t c = 0; c < model.columns.size(); ++c)
        out << "coef\t" << model.columns[c].name << '\t' << format_double(model.linear.coef[c]) << '\n';
      break;
    case ModelKind::kTree:
    case ModelKind::kForest:
    case ModelKind::kLlm:
      for (const auto& t : model.trees) {
        out << "tree\t" << t.nodes.size() << '\n';
        detail::write_tree(out, t, 0, 0);
      }
      for (std::size_t leaf = 0; leaf < model.leaf_models.size(); ++leaf) {
        const auto& lm = model.leaf_models[leaf];
        out << "leaf_model\t" << leaf << '\t' << model.leaf_support[leaf] << '\t';
        if (lm.constant) {
          out << "constant\t" << format_double(lm.constant_prob) << '\n';
          continue;
        }
        out << "linear\t" << format_double(lm.intercept) << '\n';
        for (std::size_t c = 0; c < model.columns.size(); ++c)
          out << "leaf_coef\t" << model.columns[c].name << '\t' << format_double(lm.coef[c]) << '\n';
      }
      break;
    case ModelKind::kExternal:
      if (model.command.find('\n') != std::string::npos) throw Error("model export: command contains a newline");
      out << "command\t" << model.command << '\n';
      out << "timeout\t" << format_double(model.timeout_seconds) << '\n';
      break;
  }
}

inline TrainedModel load_model(std::istream& in) {
  detail::LineReader r{in, 0, {}};
  TrainedModel model;
  r.expect("model", 2);
  model.kind = parse_model_kind(r.fields[1]);
  r.expect("training_auc", 2);
  model.training_auc = r.fields[1] == "nan" ? std::numeric_limits<double>::quiet_NaN() : r.num(1);
  bool more = r.next();
  while (more && r.fields[0] == "column") {
    if (r.fields.size() != 5) r.fail("column line needs 4 fields");
    model.columns.push_back({r.fields[1], parse_attribute_type(r.fields[2]), r.fields[1], Derivation::kPassthrough});
    model.scaler.mean.push_back(r.num(3));
    model.scaler.scale.push_back(r.num(4));
    more = r.next();
  }
  const std::size_t p = model.columns.size();
  auto read_coefs = [&](std::string_view tag, std::vector<double>& coef) {
    for (std::size_t c = 0; c < p; ++c) {
      r.expect(tag, 3);
      if (r.fields[1] != model.columns[c].name) r.fail("coefficient for unexpected column '" + r.fields[1] + "'");
      coef.push_back(r.num(2));
    }
  };
  switch (model.kind) {
    case ModelKind::kLogReg:
      if (!more || r.fields[0] != "intercept" || r.fields.size() != 2) r.fail("expected 'intercept'");
      model.linear.intercept = r.num(1);
      read_coefs("coef", model.linear.coef);
      break;
    case ModelKind::kTree:
    case ModelKind::kForest:
    case ModelKind::kLlm:
      while (more && r.fields[0] == "tree") {
        const std::size_t expected = r.count(1);
        Tree t;
        detail::read_tree_node(r, t, p);
        if (t.nodes.size() != expected) r.fail("tree node count mismatch");
        model.trees.push_back(std::move(t));
        more = r.next();
      }
      if (model.trees.empty()) r.fail("model has no trees");
      while (more && r.fields[0] == "leaf_model") {
        if (r.fields.size() != 5) r.fail("leaf_model line needs 4 fields");
        if (r.count(1) != model.leaf_models.size()) r.fail("leaf models out of order");
        model.leaf_support.push_back(r.count(2));
        LinearModel lm;
        if (r.fields[3] == "constant") {
          lm.constant = true;
          lm.constant_prob = r.num(4);
        } else if (r.fields[3] == "linear") {
          lm.intercept = r.num(4);
          read_coefs("leaf_coef", lm.coef);
        } else {
          r.fail("leaf_model kind must be 'constant' or 'linear'");
        }
        model.leaf_models.push_back(std::move(lm));
        more = r.next();
      }
      if (model.kind == ModelKind::kLlm && model.leaf_models.size() != model.trees.front().leaf_count())
        r.fail("llm needs one leaf_model per leaf");
      if (model.kind == ModelKind::kTree && model.trees.size() != 1) r.fail("tree model needs exactly one tree");
      break;
    case ModelKind::kExternal:
      if (!more || r.fields[0] != "command" || r.fields.size() < 2) r.fail("expected 'command'");
      model.command = r.fields[1];
      for (std::size_t i = 2; i < r.fields.size(); ++i) model.command += '\t' + r.fields[i];
      r.expect("timeout", 2);
      model.timeout_seconds = r.num(1);
      break;
  }
  return model;
}

inline void save_model_file(const std::string& path, const TrainedModel& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write model file '" + path + "'");
  save_model(out, model);
}

inline TrainedModel load_model_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open model file '" + path + "'");
  return load_model(in);
}

}  // namespace popx
