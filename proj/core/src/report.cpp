#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "dawgen/error.hpp"
#include "dawgen/experiment.hpp"

namespace dawgen {

namespace {

namespace fs = std::filesystem;

std::string fmt6(double v) {
  if (std::isnan(v)) return "";
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(6);
  os << v;
  return os.str();
}

std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  out += '"';
  return out;
}

// One logical CSV line, honoring quoted fields (which may contain newlines).
bool read_csv_record(std::istream& in, std::vector<std::string>& fields) {
  fields.clear();
  std::string field;
  bool in_quotes = false;
  bool any = false;
  int c;
  while ((c = in.get()) != EOF) {
    any = true;
    char ch = static_cast<char>(c);
    if (in_quotes) {
      if (ch == '"') {
        if (in.peek() == '"') {
          field += '"';
          in.get();
        } else {
          in_quotes = false;
        }
      } else {
        field += ch;
      }
    } else if (ch == '"') {
      in_quotes = true;
    } else if (ch == ',') {
      fields.push_back(field);
      field.clear();
    } else if (ch == '\n') {
      fields.push_back(field);
      return true;
    } else if (ch != '\r') {
      field += ch;
    }
  }
  if (!any) return false;
  fields.push_back(field);
  return true;
}

double parse_or_nan(const std::string& s) {
  if (s.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::size_t used = 0;
  double v = std::stod(s, &used);
  if (used != s.size()) throw Error("read_results_csv: bad number \"" + s + "\"");
  return v;
}

int parse_flag(const std::string& s, const char* what) {
  if (s == "0") return 0;
  if (s == "1") return 1;
  throw Error("read_results_csv: " + std::string(what) + " must be 0 or 1, got \"" +
              s + "\"");
}

std::uint64_t parse_seed(const std::string& s) {
  if (s.empty()) throw Error("read_results_csv: empty seed field");
  char* end = nullptr;
  unsigned long long v = std::strtoull(s.c_str(), &end, 10);
  if (end == s.c_str() || *end != '\0')
    throw Error("read_results_csv: bad seed \"" + s + "\"");
  return static_cast<std::uint64_t>(v);
}

}  // namespace

std::string format_report_table(const std::vector<RunReport>& reports) {
  if (reports.empty()) throw Error("format_report_table: no reports");

  std::vector<std::string> header = {"label", "generator", "strategy", "gs"};
  std::size_t n_seeds = 0;
  for (const RunReport& r : reports)
    n_seeds = std::max(n_seeds, r.outcomes.size());
  for (std::size_t i = 0; i < n_seeds; ++i) {
    const RunReport& r = reports.front();
    std::string name = i < r.outcomes.size()
                           ? "seed" + std::to_string(r.outcomes[i].seed)
                           : "seed?";
    header.push_back(name);
  }
  header.push_back("AVG");
  header.push_back("STD");

  std::vector<std::vector<std::string>> rows;
  for (const RunReport& r : reports) {
    std::vector<std::string> row = {r.label, r.generator, r.strategy,
                                    r.gs ? "on" : "-"};
    for (std::size_t i = 0; i < n_seeds; ++i) {
      if (i >= r.outcomes.size()) {
        row.push_back("-");
      } else if (!r.outcomes[i].ok) {
        row.push_back("fail");
      } else {
        row.push_back(fmt6(r.outcomes[i].test_accuracy));
      }
    }
    row.push_back(std::isnan(r.mean) ? "fail" : fmt6(r.mean));
    row.push_back(std::isnan(r.stddev) ? "-" : fmt6(r.stddev));
    rows.push_back(std::move(row));
  }

  std::vector<std::size_t> width(header.size(), 0);
  for (std::size_t j = 0; j < header.size(); ++j) width[j] = header[j].size();
  for (const auto& row : rows)
    for (std::size_t j = 0; j < row.size(); ++j)
      width[j] = std::max(width[j], row[j].size());

  std::ostringstream os;
  auto emit_row = [&](const std::vector<std::string>& row) {
    for (std::size_t j = 0; j < row.size(); ++j) {
      os << std::left << std::setw(static_cast<int>(width[j])) << row[j];
      if (j + 1 < row.size()) os << "  ";
    }
    os << '\n';
  };
  emit_row(header);
  std::size_t total = 0;
  for (std::size_t w : width) total += w;
  total += 2 * (width.size() - 1);
  os << std::string(total, '-') << '\n';
  for (const auto& row : rows) emit_row(row);
  return os.str();
}

void emit_report(const std::vector<RunReport>& reports,
                 const std::string& out_dir) {
  if (reports.empty()) throw Error("emit_report: no reports");
  fs::create_directories(out_dir);

  {
    fs::path p = fs::path(out_dir) / "results.csv";
    std::ofstream out(p);
    if (!out) throw Error("cannot open " + p.string());
    out << "label,task,generator,strategy,gs,seed,ok,accuracy,"
           "oracle_agreement,error\n";
    for (const RunReport& r : reports) {
      for (const SeedOutcome& o : r.outcomes) {
        out << csv_quote(r.label) << ',' << csv_quote(r.task) << ','
            << r.generator << ',' << r.strategy << ',' << (r.gs ? 1 : 0) << ','
            << o.seed << ',' << (o.ok ? 1 : 0) << ','
            << (o.ok ? fmt6(o.test_accuracy) : "") << ','
            << (o.oracle_agreement ? fmt6(*o.oracle_agreement) : "") << ','
            << csv_quote(o.error) << '\n';
      }
    }
  }

  {
    nlohmann::ordered_json j = nlohmann::ordered_json::array();
    for (const RunReport& r : reports) {
      nlohmann::ordered_json jr;
      jr["label"] = r.label;
      jr["task"] = r.task;
      jr["generator"] = r.generator;
      jr["strategy"] = r.strategy;
      jr["gs"] = r.gs;
      jr["config_digest"] = r.config_digest;
      if (std::isnan(r.mean)) {
        jr["mean"] = nullptr;
        jr["stddev"] = nullptr;
      } else {
        jr["mean"] = r.mean;
        jr["stddev"] = r.stddev;
      }
      jr["wall_seconds"] = r.wall_seconds;
      nlohmann::ordered_json outs = nlohmann::ordered_json::array();
      for (const SeedOutcome& o : r.outcomes) {
        nlohmann::ordered_json jo;
        jo["seed"] = o.seed;
        jo["ok"] = o.ok;
        if (o.ok) {
          jo["test_accuracy"] = o.test_accuracy;
          jo["best_dev_accuracy"] = o.best_dev_accuracy;
        }
        if (o.oracle_agreement) jo["oracle_agreement"] = *o.oracle_agreement;
        if (!o.error.empty()) jo["error"] = o.error;
        jo["wall_seconds"] = o.wall_seconds;
        outs.push_back(std::move(jo));
      }
      jr["outcomes"] = std::move(outs);
      j.push_back(std::move(jr));
    }
    fs::path p = fs::path(out_dir) / "results.json";
    std::ofstream out(p);
    if (!out) throw Error("cannot open " + p.string());
    out << j.dump(2) << '\n';
  }

  {
    fs::path p = fs::path(out_dir) / "report.txt";
    std::ofstream out(p);
    if (!out) throw Error("cannot open " + p.string());
    out << format_report_table(reports);
  }
}

std::vector<ResultRow> read_results_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  std::vector<std::string> fields;
  if (!read_csv_record(in, fields))
    throw Error("read_results_csv: empty file " + path);
  if (fields.size() != 10 || fields[0] != "label")
    throw Error("read_results_csv: unexpected header in " + path);
  std::vector<ResultRow> rows;
  while (read_csv_record(in, fields)) {
    if (fields.size() == 1 && fields[0].empty()) continue;  // trailing newline
    if (fields.size() != 10)
      throw Error("read_results_csv: malformed row in " + path);
    ResultRow r;
    r.label = fields[0];
    r.task = fields[1];
    r.generator = fields[2];
    r.strategy = fields[3];
    r.gs = parse_flag(fields[4], "gs");
    r.seed = parse_seed(fields[5]);
    r.ok = parse_flag(fields[6], "ok");
    try {
      r.accuracy = parse_or_nan(fields[7]);
      r.oracle_agreement = parse_or_nan(fields[8]);
    } catch (const std::invalid_argument&) {
      throw Error("read_results_csv: malformed numeric field in " + path);
    }
    r.error = fields[9];
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace dawgen
