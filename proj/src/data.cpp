#include "cvfm/data.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <system_error>

namespace cvfm {

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
  return std::string(s.substr(b, e - b));
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = line.find(',', start);
    if (pos == std::string::npos) {
      out.push_back(trim(std::string_view(line).substr(start)));
      break;
    }
    out.push_back(trim(std::string_view(line).substr(start, pos - start)));
    start = pos + 1;
  }
  return out;
}

std::string where(const std::filesystem::path& path, std::size_t line, std::size_t col) {
  return path.string() + ": row " + std::to_string(line) + ", column " + std::to_string(col);
}

double parse_number(const std::string& s, const std::filesystem::path& path, std::size_t line,
                    std::size_t col) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v))
    throw ParseError(where(path, line, col) + ": expected a finite number, got '" + s + "'");
  return v;
}

std::int64_t parse_count(const std::string& s, const std::filesystem::path& path, std::size_t line,
                         std::size_t col) {
  std::int64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw ParseError(where(path, line, col) + ": expected a non-negative integer count, got '" + s + "'");
  if (v < 0) throw ParseError(where(path, line, col) + ": negative count " + s);
  return v;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  CsvTable t;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    auto fields = split_line(line);
    if (t.header.empty()) {
      t.header = std::move(fields);
      continue;
    }
    if (fields.size() != t.header.size())
      throw ParseError(path.string() + ": row " + std::to_string(lineno) + " has " +
                       std::to_string(fields.size()) + " fields, header has " +
                       std::to_string(t.header.size()));
    t.rows.push_back(std::move(fields));
  }
  if (t.header.empty()) throw ParseError(path.string() + ": file is empty");
  return t;
}

CovariateRole parse_role(const std::string& text) {
  if (text == "mean") return CovariateRole::kMean;
  if (text == "cov" || text == "covariance") return CovariateRole::kCovariance;
  if (text == "both") return CovariateRole::kBoth;
  throw ParseError("unknown covariate role '" + text + "' (expected mean, cov or both)");
}

std::string to_string(CovariateRole role) {
  switch (role) {
    case CovariateRole::kMean: return "mean";
    case CovariateRole::kCovariance: return "cov";
    case CovariateRole::kBoth: return "both";
  }
  return "both";
}

Matrix CovariateDesign::covariance_design() const {
  std::vector<Index> cols;
  for (std::size_t c = 0; c < roles.size(); ++c)
    if (roles[c] != CovariateRole::kMean) cols.push_back(static_cast<Index>(c));
  Matrix x(values.rows(), static_cast<Index>(cols.size()) + 1);
  x.col(0).setOnes();
  for (std::size_t c = 0; c < cols.size(); ++c) x.col(static_cast<Index>(c) + 1) = values.col(cols[c]);
  return x;
}

Matrix CovariateDesign::mean_design() const {
  std::vector<Index> cols;
  for (std::size_t c = 0; c < roles.size(); ++c)
    if (roles[c] != CovariateRole::kCovariance) cols.push_back(static_cast<Index>(c));
  Matrix x(values.rows(), static_cast<Index>(cols.size()));
  for (std::size_t c = 0; c < cols.size(); ++c) x.col(static_cast<Index>(c)) = values.col(cols[c]);
  return x;
}

std::vector<std::string> CovariateDesign::covariance_names() const {
  std::vector<std::string> out{"intercept"};
  for (std::size_t c = 0; c < roles.size(); ++c)
    if (roles[c] != CovariateRole::kMean) out.push_back(names[c]);
  return out;
}

std::vector<std::string> CovariateDesign::mean_names() const {
  std::vector<std::string> out;
  for (std::size_t c = 0; c < roles.size(); ++c)
    if (roles[c] != CovariateRole::kCovariance) out.push_back(names[c]);
  return out;
}

ModelData ModelData::build(const CountTable& counts, const CovariateDesign& design, bool use_subjects) {
  require(counts.n_samples() >= 1 && counts.n_features() >= 1, "count table is empty");
  require(design.values.rows() == counts.n_samples(),
          "design has " + std::to_string(design.values.rows()) + " samples but the count table has " +
              std::to_string(counts.n_samples()));
  require(design.roles.size() == design.names.size(), "every covariate needs a role");
  if (!design.sample_ids.empty() && !counts.sample_ids.empty()) {
    for (std::size_t i = 0; i < counts.sample_ids.size(); ++i)
      require(design.sample_ids[i] == counts.sample_ids[i],
              "sample ids differ between counts and design at row " + std::to_string(i + 1) + ": '" +
                  counts.sample_ids[i] + "' vs '" + design.sample_ids[i] + "'");
  }
  require((counts.counts.array() >= 0).all(), "counts must be non-negative");
  ModelData d;
  d.y = counts.counts;
  d.x_cov = design.covariance_design();
  d.x_mean = design.mean_design();
  if (use_subjects) {
    require(counts.subjects.size() == static_cast<std::size_t>(counts.n_samples()),
            "subject mode requires a subject label for every sample");
    std::map<std::string, int> index;
    std::vector<std::string> order;
    for (const auto& s : counts.subjects) {
      auto [it, inserted] = index.emplace(s, static_cast<int>(index.size()));
      d.subject.push_back(it->second);
    }
    d.n_subjects = static_cast<int>(index.size());
  }
  return d;
}

CountTable read_counts_csv(const std::filesystem::path& path, const std::optional<std::string>& subject_column) {
  const CsvTable t = read_csv(path);
  const std::size_t first_feature = subject_column ? 2 : 1;
  if (t.header.size() <= first_feature)
    throw ParseError(path.string() + ": header must list at least one feature column");
  if (subject_column && t.header[1] != *subject_column)
    throw ParseError(path.string() + ": expected subject column '" + *subject_column +
                     "' in position 2, found '" + t.header[1] + "'");
  if (t.rows.empty()) throw ParseError(path.string() + ": no samples");
  CountTable out;
  out.feature_names.assign(t.header.begin() + static_cast<std::ptrdiff_t>(first_feature), t.header.end());
  const Index N = static_cast<Index>(t.rows.size());
  const Index J = static_cast<Index>(out.feature_names.size());
  out.counts.resize(N, J);
  for (Index i = 0; i < N; ++i) {
    const auto& row = t.rows[static_cast<std::size_t>(i)];
    out.sample_ids.push_back(row[0]);
    if (subject_column) out.subjects.push_back(row[1]);
    for (Index j = 0; j < J; ++j) {
      const std::size_t c = first_feature + static_cast<std::size_t>(j);
      out.counts(i, j) = parse_count(row[c], path, static_cast<std::size_t>(i) + 2, c + 1);
    }
  }
  return out;
}

CovariateDesign read_design_csv(const std::filesystem::path& path) {
  const CsvTable t = read_csv(path);
  if (t.rows.empty()) throw ParseError(path.string() + ": no samples");
  CovariateDesign d;
  std::vector<std::size_t> cols;
  std::size_t intercept_col = 0;
  for (std::size_t c = 1; c < t.header.size(); ++c) {
    if (t.header[c] == "intercept") {
      intercept_col = c;
      continue;
    }
    d.names.push_back(t.header[c]);
    cols.push_back(c);
  }
  const Index N = static_cast<Index>(t.rows.size());
  d.values.resize(N, static_cast<Index>(cols.size()));
  for (Index i = 0; i < N; ++i) {
    const auto& row = t.rows[static_cast<std::size_t>(i)];
    d.sample_ids.push_back(row[0]);
    if (intercept_col != 0) {
      const double v = parse_number(row[intercept_col], path, static_cast<std::size_t>(i) + 2, intercept_col + 1);
      if (v != 1.0)
        throw ParseError(where(path, static_cast<std::size_t>(i) + 2, intercept_col + 1) +
                         ": intercept column must be 1 in every row");
    }
    for (std::size_t c = 0; c < cols.size(); ++c)
      d.values(i, static_cast<Index>(c)) = parse_number(row[cols[c]], path, static_cast<std::size_t>(i) + 2, cols[c] + 1);
  }
  d.roles.assign(d.names.size(), CovariateRole::kBoth);
  return d;
}

void write_counts_csv(const std::filesystem::path& path, const CountTable& table) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path.string());
  const bool subjects = !table.subjects.empty();
  out << "sample";
  if (subjects) out << ",subject";
  for (const auto& f : table.feature_names) out << ',' << f;
  out << '\n';
  for (Index i = 0; i < table.n_samples(); ++i) {
    out << table.sample_ids[static_cast<std::size_t>(i)];
    if (subjects) out << ',' << table.subjects[static_cast<std::size_t>(i)];
    for (Index j = 0; j < table.n_features(); ++j) out << ',' << table.counts(i, j);
    out << '\n';
  }
}

void write_design_csv(const std::filesystem::path& path, const CovariateDesign& design) {
  std::vector<std::string> header{"sample"};
  header.insert(header.end(), design.names.begin(), design.names.end());
  write_matrix_csv(path, header, design.values, design.sample_ids);
}

void write_matrix_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
                      const Matrix& values, const std::vector<std::string>& row_labels) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path.string());
  for (std::size_t c = 0; c < header.size(); ++c) out << (c ? "," : "") << header[c];
  out << '\n';
  for (Index i = 0; i < values.rows(); ++i) {
    bool first = true;
    if (!row_labels.empty()) {
      out << row_labels[static_cast<std::size_t>(i)];
      first = false;
    }
    for (Index j = 0; j < values.cols(); ++j) {
      if (!first) out << ',';
      out << format_double(values(i, j));
      first = false;
    }
    out << '\n';
  }
}

}  // namespace cvfm
