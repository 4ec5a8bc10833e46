#include "dpfedrep/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <vector>

#include "dpfedrep/error.hpp"

namespace dpfedrep {

namespace {

std::string format_number(double x) {
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string format_cell(const std::optional<double>& x) { return x ? format_number(*x) : "NA"; }

std::string quote(const std::string& field) {
  if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

// RFC-4180 record splitter; handles quoted fields, doubled quotes and
// embedded line breaks.
bool read_record(std::istream& is, std::vector<std::string>& fields) {
  fields.clear();
  std::string field;
  bool in_quotes = false;
  bool any = false;
  char c;
  while (is.get(c)) {
    any = true;
    if (in_quotes) {
      if (c == '"') {
        if (is.peek() == '"') {
          field += '"';
          is.get();
        } else {
          in_quotes = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"') {
      in_quotes = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else if (c == '\n') {
      break;
    } else if (c != '\r') {
      field += c;
    }
  }
  if (!any) return false;
  fields.push_back(std::move(field));
  return true;
}

std::optional<double> parse_cell(const std::string& s) {
  if (s == "NA") return std::nullopt;
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  std::size_t used = 0;
  const double x = std::stod(s, &used);
  if (used != s.size()) throw Error(ErrorCode::Io, "malformed number '" + s + "'");
  return x;
}

}  // namespace

void write_csv(const ExperimentResult& result, std::ostream& os) {
  os << kCsvHeader << "\r\n";
  for (const auto& r : result.rows) {
    os << quote(method_name(r.method)) << ',' << format_number(r.epsilon) << ',' << r.seed << ','
       << format_cell(r.excess_mse) << ',' << format_cell(r.zero_one_loss) << ',' << format_cell(r.dist_to_ustar)
       << ',' << format_cell(r.wall_time_ms) << ',' << format_cell(r.clip_rate) << "\r\n";
  }
}

void emit_csv(const ExperimentResult& result, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorCode::Io, "cannot open " + path.string());
  write_csv(result, os);
  if (!os) throw Error(ErrorCode::Io, "write failed for " + path.string());
}

ExperimentResult read_csv(std::istream& is) {
  std::vector<std::string> fields;
  if (!read_record(is, fields)) throw Error(ErrorCode::Io, "empty CSV");
  std::string header;
  for (std::size_t i = 0; i < fields.size(); ++i) header += (i ? "," : "") + fields[i];
  if (header != kCsvHeader) throw Error(ErrorCode::Io, "unexpected CSV header '" + header + "'");

  ExperimentResult result;
  while (read_record(is, fields)) {
    if (fields.size() == 1 && fields[0].empty()) continue;
    if (fields.size() != 8) throw Error(ErrorCode::Io, "CSV row with " + std::to_string(fields.size()) + " fields");
    const auto method = parse_method(fields[0]);
    if (!method) throw Error(ErrorCode::Io, "unknown method '" + fields[0] + "'");
    ResultRow row;
    row.method = *method;
    row.epsilon = parse_cell(fields[1]).value_or(kEpsilonNonPrivate);
    row.seed = std::stoull(fields[2]);
    row.excess_mse = parse_cell(fields[3]);
    row.zero_one_loss = parse_cell(fields[4]);
    row.dist_to_ustar = parse_cell(fields[5]);
    row.wall_time_ms = parse_cell(fields[6]);
    row.clip_rate = parse_cell(fields[7]);
    result.rows.push_back(row);
  }
  return result;
}

ExperimentResult load_csv(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCode::Io, "cannot open " + path.string());
  return read_csv(is);
}

// ---------------------------------------------------------------------------

void write_plot(const ExperimentResult& result, std::ostream& os) {
  // method -> epsilon -> (sum, count)
  std::map<int, std::map<double, std::pair<double, int>>> series;
  for (const auto& r : result.rows) {
    const auto metric = r.excess_mse ? r.excess_mse : r.zero_one_loss;
    if (!metric || !std::isfinite(r.epsilon) || !(*metric > 0)) continue;
    auto& cell = series[int(r.method)][r.epsilon];
    cell.first += *metric;
    cell.second += 1;
  }

  constexpr double width = 640, height = 420, left = 70, right = 170, top = 30, bottom = 50;
  double xmin = INFINITY, xmax = -INFINITY, ymin = INFINITY, ymax = -INFINITY;
  for (const auto& [m, pts] : series)
    for (const auto& [eps, acc] : pts) {
      const double y = std::log10(acc.first / acc.second);
      xmin = std::min(xmin, eps), xmax = std::max(xmax, eps);
      ymin = std::min(ymin, y), ymax = std::max(ymax, y);
    }
  if (series.empty()) xmin = 0, xmax = 1, ymin = -1, ymax = 0;
  if (xmax == xmin) xmax = xmin + 1;
  ymin = std::floor(ymin), ymax = std::ceil(ymax);
  if (ymax == ymin) ymax = ymin + 1;
  const double pw = width - left - right, ph = height - top - bottom;
  auto px = [&](double x) { return left + (x - xmin) / (xmax - xmin) * pw; };
  auto py = [&](double y) { return top + (ymax - y) / (ymax - ymin) * ph; };

  static const char* colors[] = {"#d62728", "#1f77b4", "#2ca02c", "#9467bd"};
  char buf[256];
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  std::snprintf(buf, sizeof buf, "<rect x=\"%g\" y=\"%g\" width=\"%g\" height=\"%g\" fill=\"none\" stroke=\"black\"/>\n",
                left, top, pw, ph);
  os << buf;
  for (double e = ymin; e <= ymax + 1e-9; e += 1) {
    std::snprintf(buf, sizeof buf,
                  "<line x1=\"%g\" y1=\"%.2f\" x2=\"%g\" y2=\"%.2f\" stroke=\"#ddd\"/>"
                  "<text x=\"%g\" y=\"%.2f\" text-anchor=\"end\">1e%d</text>\n",
                  left, py(e), left + pw, py(e), left - 6, py(e) + 4, int(e));
    os << buf;
  }
  std::vector<double> xticks;
  for (const auto& [m, pts] : series)
    for (const auto& [eps, acc] : pts) xticks.push_back(eps);
  std::sort(xticks.begin(), xticks.end());
  xticks.erase(std::unique(xticks.begin(), xticks.end()), xticks.end());
  for (double x : xticks) {
    std::snprintf(buf, sizeof buf, "<text x=\"%.2f\" y=\"%g\" text-anchor=\"middle\">%g</text>\n", px(x),
                  top + ph + 18, x);
    os << buf;
  }
  std::snprintf(buf, sizeof buf, "<text x=\"%g\" y=\"%g\" text-anchor=\"middle\">epsilon</text>\n", left + pw / 2,
                height - 10);
  os << buf;
  std::snprintf(buf, sizeof buf,
                "<text x=\"16\" y=\"%g\" text-anchor=\"middle\" transform=\"rotate(-90 16 %g)\">"
                "seed-averaged loss (log scale)</text>\n",
                top + ph / 2, top + ph / 2);
  os << buf;

  int legend = 0;
  for (const auto& [m, pts] : series) {
    const char* color = colors[m % 4];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (const auto& [eps, acc] : pts) {
      std::snprintf(buf, sizeof buf, "%.2f,%.2f ", px(eps), py(std::log10(acc.first / acc.second)));
      os << buf;
    }
    os << "\"/>\n";
    for (const auto& [eps, acc] : pts) {
      std::snprintf(buf, sizeof buf, "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"3\" fill=\"%s\"/>\n", px(eps),
                    py(std::log10(acc.first / acc.second)), color);
      os << buf;
    }
    const double ly = top + 14 + 18 * legend++;
    std::snprintf(buf, sizeof buf,
                  "<line x1=\"%g\" y1=\"%g\" x2=\"%g\" y2=\"%g\" stroke=\"%s\" stroke-width=\"2\"/>"
                  "<text x=\"%g\" y=\"%g\">%s</text>\n",
                  left + pw + 10, ly, left + pw + 30, ly, color, left + pw + 36, ly + 4,
                  method_name(static_cast<Method>(m)));
    os << buf;
  }
  os << "</svg>\n";
}

void emit_plot(const ExperimentResult& result, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw Error(ErrorCode::Io, "cannot open " + path.string());
  write_plot(result, os);
}

}  // namespace dpfedrep
