#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "umtr/dataset.hpp"
#include "umtr/error.hpp"

namespace umtr {

/// Integer-valued columns with at most this many distinct values are read as
/// categorical when no schema is given.
inline constexpr std::size_t kCategoricalInferenceLimit = 20;

namespace csv_detail {

using Record = std::vector<std::string>;

/// RFC-4180 records: quoted fields may hold commas, doubled quotes and line
/// breaks. Accepts LF or CRLF line endings.
inline std::vector<Record> parse_records(std::string_view text) {
  std::vector<Record> records;
  Record current;
  std::string field;
  bool in_quotes = false;
  bool field_was_quoted = false;
  std::size_t line = 0;
  auto end_record = [&] {
    const bool blank = current.empty() && field.empty() && !field_was_quoted;
    current.push_back(std::move(field));
    field.clear();
    field_was_quoted = false;
    if (!blank) records.push_back(std::move(current));
    current.clear();
  };
  for (std::size_t k = 0; k < text.size(); ++k) {
    const char ch = text[k];
    if (in_quotes) {
      if (ch == '"') {
        if (k + 1 < text.size() && text[k + 1] == '"') {
          field.push_back('"');
          ++k;
        } else {
          in_quotes = false;
        }
      } else {
        if (ch == '\n') ++line;
        field.push_back(ch);
      }
      continue;
    }
    switch (ch) {
      case '"':
        if (!field.empty() || field_was_quoted) {
          throw ParseError("stray quote inside unquoted field", records.size());
        }
        in_quotes = true;
        field_was_quoted = true;
        break;
      case ',':
        current.push_back(std::move(field));
        field.clear();
        field_was_quoted = false;
        break;
      case '\r':
        if (k + 1 < text.size() && text[k + 1] == '\n') break;
        end_record();
        ++line;
        break;
      case '\n':
        end_record();
        ++line;
        break;
      default:
        field.push_back(ch);
    }
  }
  if (in_quotes) throw ParseError("unterminated quoted field", records.size());
  if (!field.empty() || !current.empty() || field_was_quoted) end_record();
  return records;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

inline bool is_na_token(std::string_view raw) {
  const std::string_view s = trim(raw);
  if (s.empty()) return true;
  auto iequals = [](std::string_view a, std::string_view b) {
    return a.size() == b.size() &&
           std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
             return std::tolower(static_cast<unsigned char>(x)) ==
                    std::tolower(static_cast<unsigned char>(y));
           });
  };
  return iequals(s, "NA") || iequals(s, "NaN");
}

inline std::optional<double> parse_number(std::string_view raw) {
  std::string_view s = trim(raw);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

inline std::string format_number(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

inline std::string quote_if_needed(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out.push_back('"');
    out.push_back(ch);
  }
  out.push_back('"');
  return out;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open '" + path + "'", 0);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct ColumnDictionary {
  std::vector<std::string> labels;
  std::map<std::string, std::uint32_t> code_of;
};

/// Sorted label dictionary; numeric order when every label parses as a number.
inline ColumnDictionary build_dictionary(const std::vector<std::string>& tokens) {
  std::map<std::string, std::uint32_t> seen;
  std::vector<std::string> distinct;
  std::map<double, std::string> numeric_first;
  bool all_numeric = true;
  for (const auto& tok : tokens) {
    if (is_na_token(tok)) continue;
    const std::string t(trim(tok));
    if (seen.emplace(t, 0).second) distinct.push_back(t);
  }
  for (const auto& t : distinct) {
    if (!parse_number(t)) {
      all_numeric = false;
      break;
    }
  }
  ColumnDictionary dict;
  if (all_numeric) {
    // Tokens such as "1" and "1.0" denote the same level; the first spelling
    // becomes the label.
    for (const auto& t : distinct) numeric_first.emplace(*parse_number(t), t);
    std::map<double, std::uint32_t> code_of_value;
    for (const auto& [v, t] : numeric_first) {
      code_of_value.emplace(v, static_cast<std::uint32_t>(dict.labels.size()));
      dict.labels.push_back(t);
    }
    for (const auto& t : distinct) dict.code_of[t] = code_of_value.at(*parse_number(t));
  } else {
    std::sort(distinct.begin(), distinct.end());
    for (const auto& t : distinct) {
      dict.code_of[t] = static_cast<std::uint32_t>(dict.labels.size());
      dict.labels.push_back(t);
    }
  }
  return dict;
}

}  // namespace csv_detail

/// Sidecar schema: one `name,kind[,cardinality]` line per column, kind being
/// `continuous` or `categorical`. Blank lines and `#` comments are skipped.
inline Schema parse_schema(std::string_view text) {
  Schema schema;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    const auto body = csv_detail::trim(line);
    if (body.empty() || body.front() == '#') continue;
    auto fields = csv_detail::parse_records(std::string(body) + "\n");
    if (fields.empty()) continue;
    auto& f = fields.front();
    for (auto& s : f) s = std::string(csv_detail::trim(s));
    if (f.size() < 2 || f.size() > 3) {
      throw ParseError("schema line " + std::to_string(line_no) + ": expected name,kind[,cardinality]",
                       0);
    }
    std::string kind = f[1];
    std::transform(kind.begin(), kind.end(), kind.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (kind == "continuous") {
      if (f.size() == 3) {
        throw ParseError("schema line " + std::to_string(line_no) +
                             ": continuous columns take no cardinality",
                         0);
      }
      schema.push_back({f[0], FeatureKind::continuous(), {}});
    } else if (kind == "categorical") {
      std::uint32_t card = 0;
      if (f.size() == 3) {
        const auto v = csv_detail::parse_number(f[2]);
        if (!v || *v < 2 || *v != std::floor(*v)) {
          throw ParseError("schema line " + std::to_string(line_no) + ": bad cardinality", 0);
        }
        card = static_cast<std::uint32_t>(*v);
      }
      // cardinality 0 = take it from the data
      schema.push_back({f[0], FeatureKind{FeatureKind::Tag::kCategorical, card}, {}});
    } else {
      throw ParseError("schema line " + std::to_string(line_no) + ": unknown kind '" + f[1] + "'",
                       0);
    }
  }
  return schema;
}

inline Schema load_schema(const std::string& path) {
  return parse_schema(csv_detail::read_file(path));
}

inline std::string format_schema(const Schema& schema) {
  std::string out;
  for (const auto& f : schema) {
    out += csv_detail::quote_if_needed(f.name);
    if (f.kind.is_categorical()) {
      out += ",categorical," + std::to_string(f.kind.cardinality) + "\n";
    } else {
      out += ",continuous\n";
    }
  }
  return out;
}

/// Parses CSV text. With a schema hint the column kinds are taken from it;
/// otherwise integer-valued columns with <= 20 distinct values, and any column
/// holding a non-numeric token, become categorical.
inline TabularDataset parse_csv(std::string_view text, const std::optional<Schema>& hint = {}) {
  using namespace csv_detail;
  auto records = parse_records(text);
  if (records.empty()) throw ParseError("missing header row", 0);
  const Record header = records.front();
  const std::size_t d = header.size();
  const std::size_t n = records.size() - 1;
  for (std::size_t r = 1; r < records.size(); ++r) {
    if (records[r].size() != d) {
      throw ParseError("row " + std::to_string(r) + " has " + std::to_string(records[r].size()) +
                           " fields, expected " + std::to_string(d),
                       r);
    }
  }
  if (hint) {
    if (hint->size() != d) {
      throw ParseError("schema has " + std::to_string(hint->size()) + " columns, CSV has " +
                           std::to_string(d),
                       0);
    }
    for (std::size_t j = 0; j < d; ++j) {
      if ((*hint)[j].name != trim(header[j])) {
        throw ParseError("schema column '" + (*hint)[j].name + "' does not match header '" +
                             header[j] + "'",
                         0, j);
      }
    }
  }

  Schema schema;
  std::vector<double> values(n * d, kMissing);
  std::vector<std::uint8_t> observed(n * d, 0);
  std::vector<std::string> tokens(n);
  for (std::size_t j = 0; j < d; ++j) {
    for (std::size_t i = 0; i < n; ++i) tokens[i] = records[i + 1][j];
    const std::string name(trim(header[j]));

    bool all_numeric = true;
    bool all_integer = true;
    std::vector<double> distinct_values;
    for (const auto& t : tokens) {
      if (is_na_token(t)) continue;
      const auto v = parse_number(t);
      if (!v) {
        all_numeric = false;
        break;
      }
      if (*v != std::floor(*v)) all_integer = false;
      distinct_values.push_back(*v);
    }
    std::sort(distinct_values.begin(), distinct_values.end());
    distinct_values.erase(std::unique(distinct_values.begin(), distinct_values.end()),
                          distinct_values.end());

    FeatureKind kind;
    if (hint) {
      kind = (*hint)[j].kind;
    } else if (!all_numeric) {
      kind.tag = FeatureKind::Tag::kCategorical;
    } else if (all_integer && distinct_values.size() >= 2 &&
               distinct_values.size() <= kCategoricalInferenceLimit) {
      kind.tag = FeatureKind::Tag::kCategorical;
    }

    Feature feature{name, kind, {}};
    if (kind.is_continuous()) {
      for (std::size_t i = 0; i < n; ++i) {
        if (is_na_token(tokens[i])) continue;
        const auto v = parse_number(tokens[i]);
        if (!v) {
          throw ParseError("non-numeric value '" + tokens[i] + "' in continuous column '" + name +
                               "' at row " + std::to_string(i + 1) + ", column " +
                               std::to_string(j),
                           i + 1, j);
        }
        values[j * n + i] = *v;
        observed[j * n + i] = 1;
      }
    } else if (hint && !(*hint)[j].labels.empty()) {
      // a fitted model's schema: codes follow its label order
      const auto& labels = (*hint)[j].labels;
      for (std::size_t i = 0; i < n; ++i) {
        if (is_na_token(tokens[i])) continue;
        const auto it = std::find(labels.begin(), labels.end(), trim(tokens[i]));
        if (it == labels.end()) {
          throw ParseError("unknown level '" + tokens[i] + "' in column '" + name + "'", i + 1, j);
        }
        values[j * n + i] = static_cast<double>(it - labels.begin());
        observed[j * n + i] = 1;
      }
      feature.labels = labels;
    } else {
      const std::uint32_t hinted = kind.cardinality;
      // Integer codes already inside [0, hinted) are used verbatim.
      const bool verbatim_codes =
          hinted > 0 && all_numeric && all_integer &&
          (distinct_values.empty() || (distinct_values.front() >= 0 && distinct_values.back() < hinted));
      if (verbatim_codes) {
        for (std::uint32_t c = 0; c < hinted; ++c) feature.labels.push_back(std::to_string(c));
        for (std::size_t i = 0; i < n; ++i) {
          if (is_na_token(tokens[i])) continue;
          values[j * n + i] = *parse_number(tokens[i]);
          observed[j * n + i] = 1;
        }
      } else {
        auto dict = build_dictionary(tokens);
        if (hinted > 0 && dict.labels.size() > hinted) {
          throw ParseError("column '" + name + "' has " + std::to_string(dict.labels.size()) +
                               " levels but the schema allows " + std::to_string(hinted),
                           0, j);
        }
        const std::uint32_t card =
            std::max<std::uint32_t>(hinted, static_cast<std::uint32_t>(dict.labels.size()));
        if (card < 2) {
          throw ParseError("categorical column '" + name + "' needs at least two levels", 0, j);
        }
        while (dict.labels.size() < card) {
          dict.labels.push_back("level_" + std::to_string(dict.labels.size()));
        }
        feature.labels = dict.labels;
        for (std::size_t i = 0; i < n; ++i) {
          if (is_na_token(tokens[i])) continue;
          values[j * n + i] = dict.code_of.at(std::string(trim(tokens[i])));
          observed[j * n + i] = 1;
        }
        kind.cardinality = card;
      }
      if (kind.cardinality == 0) kind.cardinality = hinted;
      feature.kind = kind;
    }
    schema.push_back(std::move(feature));
  }
  return TabularDataset(std::move(schema), n, std::move(values), std::move(observed));
}

inline TabularDataset load_csv(const std::string& path, const std::optional<Schema>& hint = {}) {
  return parse_csv(csv_detail::read_file(path), hint);
}

/// Unobserved cells are written as empty fields; continuous values use the
/// shortest decimal form that reads back to the same double.
inline std::string format_csv(const TabularDataset& data) {
  using namespace csv_detail;
  std::string out;
  for (std::size_t j = 0; j < data.n_features(); ++j) {
    if (j) out.push_back(',');
    out += quote_if_needed(data.feature(j).name);
  }
  out.push_back('\n');
  for (std::size_t i = 0; i < data.n_rows(); ++i) {
    for (std::size_t j = 0; j < data.n_features(); ++j) {
      if (j) out.push_back(',');
      if (!data.observed(i, j)) {
        // a lone empty field would read back as a blank line
        if (data.n_features() == 1) out += "\"\"";
        continue;
      }
      const double v = data.value(i, j);
      const Feature& f = data.feature(j);
      if (f.kind.is_categorical() && !f.labels.empty()) {
        out += quote_if_needed(f.labels.at(static_cast<std::size_t>(v)));
      } else {
        out += format_number(v);
      }
    }
    out.push_back('\n');
  }
  return out;
}

inline void save_csv(const TabularDataset& data, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path + "'");
  out << format_csv(data);
  if (!out) throw Error("write to '" + path + "' failed");
}

}  // namespace umtr
