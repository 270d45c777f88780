#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "halvinglab/curve_model.hpp"
#include "halvinglab/errors.hpp"

namespace halvinglab {

namespace {

constexpr int kReferenceId = -1;

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

long long parse_int(std::string_view s, const char* field, std::size_t line) {
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw ParseError(std::string(field) + ": expected an integer, got '" + std::string(s) + "'", line);
  }
  return v;
}

double parse_real(std::string_view s, const std::string& field, std::size_t line) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw ParseError(field + ": expected a number, got '" + std::string(s) + "'", line);
  }
  if (!std::isfinite(v)) throw ParseError(field + ": non-finite value '" + std::string(s) + "'", line);
  return v;
}

struct PendingCurve {
  std::vector<double> hyperparams;
  std::map<long long, double> values;  // t -> value
  std::size_t last_line = 0;
};

}  // namespace

std::string format_double(double value) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc{}) throw Error("format_double: conversion failed");
  return std::string(buf, ptr);
}

CurveSet read_csv(std::istream& in, const CsvOptions& options) {
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw ParseError("missing header", 1);
  ++line_no;
  const auto header = split(line);
  if (header.size() < 3 || header[0] != "candidate_id" || header[1] != "t" || header[2] != "value") {
    throw ParseError("header must start with candidate_id,t,value", line_no);
  }
  if (header.size() < 4) throw ParseError("missing hyperparameter columns h1..hD", line_no);
  const std::size_t dims = header.size() - 3;

  std::map<long long, PendingCurve> pending;
  std::optional<PendingCurve> reference;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split(line);
    if (fields.size() != header.size()) {
      throw ParseError("expected " + std::to_string(header.size()) + " columns, got " +
                       std::to_string(fields.size()),
                       line_no);
    }
    const long long id = parse_int(fields[0], "candidate_id", line_no);
    const long long t = parse_int(fields[1], "t", line_no);
    const double value = parse_real(fields[2], "value", line_no);
    if (id < kReferenceId) throw ParseError("candidate_id must be >= -1", line_no);
    if (t < 1) throw ParseError("t must be >= 1", line_no);

    const bool is_ref = id == kReferenceId;
    std::vector<double> h;
    if (!is_ref) {
      h.reserve(dims);
      for (std::size_t d = 0; d < dims; ++d) {
        const std::string name(header[3 + d]);
        if (fields[3 + d].empty()) throw ParseError("missing hyperparameter " + name, line_no);
        h.push_back(parse_real(fields[3 + d], name, line_no));
      }
    }
    PendingCurve& dest = is_ref ? (reference ? *reference : reference.emplace()) : pending[id];
    if (!is_ref) {
      if (dest.values.empty()) {
        dest.hyperparams = h;
      } else if (dest.hyperparams != h) {
        throw ParseError("hyperparameters of candidate " + std::to_string(id) + " change between rows",
                         line_no);
      }
    }
    if (!dest.values.emplace(t, value).second) {
      throw ParseError("duplicate row for candidate " + std::to_string(id) + " at t=" + std::to_string(t),
                       line_no);
    }
    dest.last_line = line_no;
  }
  if (pending.empty()) throw ParseError("no candidate rows", line_no);

  long long steps = 0;
  for (const auto& [id, c] : pending) steps = std::max(steps, c.values.rbegin()->first);
  const auto check_grid = [&](long long id, const PendingCurve& c) {
    if (static_cast<long long>(c.values.size()) != steps || c.values.rbegin()->first != steps) {
      throw ParseError("candidate " + std::to_string(id) + " has " + std::to_string(c.values.size()) +
                           " steps on a grid of T=" + std::to_string(steps) +
                           " (ragged or non-uniform curve)",
                       c.last_line);
    }
  };

  std::vector<LearningCurve> curves;
  curves.reserve(pending.size());
  int next_id = 0;
  for (const auto& [id, c] : pending) {
    check_grid(id, c);
    LearningCurve curve{next_id++, c.hyperparams, {}};
    curve.values.reserve(static_cast<std::size_t>(steps));
    for (const auto& [t, v] : c.values) curve.values.push_back(v);
    curves.push_back(std::move(curve));
  }
  std::optional<std::vector<double>> ref_values;
  if (reference) {
    check_grid(kReferenceId, *reference);
    ref_values.emplace();
    for (const auto& [t, v] : reference->values) ref_values->push_back(v);
  }
  CurveSet set(std::move(curves), std::move(ref_values));
  return options.subtract_reference ? apply_reference_diff(set) : set;
}

CurveSet load_csv(const std::filesystem::path& path, const CsvOptions& options) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open curves file " + path.string());
  try {
    return read_csv(in, options);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what(), e.line());
  }
}

void write_csv(const CurveSet& set, std::ostream& out) {
  out << "candidate_id,t,value";
  for (int d = 1; d <= set.dims(); ++d) out << ",h" << d;
  out << '\n';
  if (set.reference()) {
    for (int t = 0; t < set.steps(); ++t) {
      out << kReferenceId << ',' << (t + 1) << ',' << format_double((*set.reference())[t]);
      for (int d = 0; d < set.dims(); ++d) out << ',';
      out << '\n';
    }
  }
  for (const auto& c : set.curves()) {
    std::string hyper;
    for (double h : c.hyperparams) hyper += ',' + format_double(h);
    for (int t = 0; t < set.steps(); ++t) {
      out << c.id << ',' << (t + 1) << ',' << format_double(c.values[t]) << hyper << '\n';
    }
  }
}

void save_csv(const CurveSet& set, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write curves file " + path.string());
  write_csv(set, out);
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace halvinglab
