#include "fairaudit/io.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <tuple>

#include "fairaudit/common.hpp"

namespace fairaudit {

namespace {

std::string lower(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (c == ' ' || c == '-') c = '_';
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return out;
}

std::string join_header(const std::vector<std::string>& fields) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out += ",";
    out += fields[i];
  }
  return out;
}

[[noreturn]] void fail(const std::string& origin, std::size_t line,
                       const std::string& what) {
  throw DataError(origin + ":" + std::to_string(line) + ": " + what);
}

bool is_na(std::string_view s) {
  const auto l = lower(s);
  return l.empty() || l == "na" || l == "n/a" || l == "nan";
}

Gender parse_gender(std::string_view s) {
  const auto l = lower(s);
  if (is_na(s)) return Gender::kNA;
  if (l == "male" || l == "m") return Gender::kMale;
  if (l == "female" || l == "f") return Gender::kFemale;
  throw DataError("unknown gender '" + std::string(s) + "'");
}

Ethnicity parse_ethnicity(std::string_view s) {
  if (is_na(s)) return Ethnicity::kNA;
  const auto l = lower(s);
  if (l == "white") return Ethnicity::kWhite;
  if (l == "asian") return Ethnicity::kAsian;
  if (l == "black") return Ethnicity::kBlack;
  if (l == "hispanic") return Ethnicity::kHispanic;
  if (l == "american_indian" || l == "americanindian") return Ethnicity::kAmericanIndian;
  if (l == "pacific_islander" || l == "pacificislander") return Ethnicity::kPacificIslander;
  if (l == "other") return Ethnicity::kOther;
  throw DataError("unknown ethnicity '" + std::string(s) + "'");
}

Condition parse_condition(std::string_view s) {
  if (is_na(s)) return Condition::kNA;
  const auto l = lower(s);
  if (l == "yes" || l == "true" || l == "1") return Condition::kYes;
  if (l == "no" || l == "false" || l == "0") return Condition::kNo;
  throw DataError("unknown condition value '" + std::string(s) + "'");
}

template <typename T>
T parse_number(std::string_view s, const char* what) {
  T value{};
  const auto* first = s.data();
  const auto* last = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) {
    throw DataError(std::string("invalid ") + what + " '" + std::string(s) + "'");
  }
  return value;
}

std::ifstream open_or_throw(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return in;
}

}  // namespace

bool CsvReader::next(std::vector<std::string>& fields) {
  fields.clear();
  std::string field;
  bool in_quotes = false;
  bool any = false;
  char c;
  while (in_.get(c)) {
    any = true;
    if (in_quotes) {
      if (c == '"') {
        if (in_.peek() == '"') {
          in_.get(c);
          field.push_back('"');
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line_;
        field.push_back(c);
      }
      continue;
    }
    if (c == '"') {
      in_quotes = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else if (c == '\r') {
      continue;
    } else if (c == '\n') {
      ++line_;
      fields.push_back(std::move(field));
      return true;
    } else {
      field.push_back(c);
    }
  }
  if (!any) return false;
  ++line_;
  fields.push_back(std::move(field));
  return true;
}

std::string csv_escape(std::string_view field) {
  if (field.find_first_of(",\"\n\r") == std::string_view::npos) {
    return std::string(field);
  }
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

std::vector<StepRecord> read_records(const std::filesystem::path& path) {
  auto in = open_or_throw(path);
  return read_records(in, path.string());
}

std::vector<StepRecord> read_records(std::istream& in, const std::string& origin) {
  CsvReader reader(in);
  std::vector<std::string> f;
  if (!reader.next(f) || join_header(f) != kRecordsHeader) {
    fail(origin, 1, std::string("expected header '") + kRecordsHeader + "'");
  }
  std::vector<StepRecord> out;
  while (reader.next(f)) {
    if (f.size() == 1 && f[0].empty()) continue;
    if (f.size() != 5) fail(origin, reader.line(), "expected 5 fields");
    try {
      StepRecord r;
      r.user_id = f[0];
      if (r.user_id.empty()) throw DataError("empty user_id");
      r.hour = parse_timestamp(f[1]);
      r.steps = parse_number<std::int64_t>(f[2], "steps");
      if (r.steps < 0) throw DataError("negative steps");
      r.source = parse_source(f[3]);
      r.device_model = f[4];
      out.push_back(std::move(r));
    } catch (const DataError& e) {
      fail(origin, reader.line(), e.what());
    }
  }
  try {
    validate_records(out);
  } catch (const DataError& e) {
    throw DataError(origin + ": " + e.what());
  }
  return out;
}

std::vector<RawAttributeProfile> read_profiles(const std::filesystem::path& path) {
  auto in = open_or_throw(path);
  return read_profiles(in, path.string());
}

std::vector<RawAttributeProfile> read_profiles(std::istream& in,
                                               const std::string& origin) {
  CsvReader reader(in);
  std::vector<std::string> f;
  if (!reader.next(f) || join_header(f) != kProfilesHeader) {
    fail(origin, 1, std::string("expected header '") + kProfilesHeader + "'");
  }
  std::vector<RawAttributeProfile> out;
  std::set<std::string> seen;
  while (reader.next(f)) {
    if (f.size() == 1 && f[0].empty()) continue;
    if (f.size() != 10) fail(origin, reader.line(), "expected 10 fields");
    try {
      RawAttributeProfile p;
      p.user_id = f[0];
      if (p.user_id.empty()) throw DataError("empty user_id");
      if (!seen.insert(p.user_id).second) {
        throw DataError("duplicate profile for user " + p.user_id);
      }
      p.gender = parse_gender(f[1]);
      p.ethnicity = parse_ethnicity(f[2]);
      if (!is_na(f[3])) p.age = parse_number<int>(f[3], "age");
      if (!is_na(f[4])) p.height_cm = parse_number<double>(f[4], "height_cm");
      if (!is_na(f[5])) p.weight_kg = parse_number<double>(f[5], "weight_kg");
      p.heart_condition = parse_condition(f[6]);
      p.hypertension = parse_condition(f[7]);
      p.joint_problem = parse_condition(f[8]);
      p.diabetes = parse_condition(f[9]);
      binarize(p);  // range validation
      out.push_back(std::move(p));
    } catch (const DataError& e) {
      fail(origin, reader.line(), e.what());
    }
  }
  return out;
}

void validate_records(std::span<const StepRecord> records) {
  std::set<std::tuple<std::string_view, Source, HourStamp>> seen;
  for (const auto& r : records) {
    if (r.steps < 0) throw DataError("user " + r.user_id + ": negative steps");
    if (!seen.emplace(r.user_id, r.source, r.hour).second) {
      throw DataError("user " + r.user_id + ": duplicate " +
                      std::string(source_name(r.source)) + " record at " +
                      format_timestamp(r.hour));
    }
  }
}

std::string_view gender_name(Gender g) {
  switch (g) {
    case Gender::kMale:
      return "Male";
    case Gender::kFemale:
      return "Female";
    case Gender::kNA:
      break;
  }
  return "";
}

std::string_view ethnicity_name(Ethnicity e) {
  switch (e) {
    case Ethnicity::kWhite:
      return "White";
    case Ethnicity::kAsian:
      return "Asian";
    case Ethnicity::kBlack:
      return "Black";
    case Ethnicity::kHispanic:
      return "Hispanic";
    case Ethnicity::kAmericanIndian:
      return "AmericanIndian";
    case Ethnicity::kPacificIslander:
      return "PacificIslander";
    case Ethnicity::kOther:
      return "Other";
    case Ethnicity::kNA:
      break;
  }
  return "";
}

std::string_view condition_name(Condition c) {
  switch (c) {
    case Condition::kYes:
      return "Yes";
    case Condition::kNo:
      return "No";
    case Condition::kNA:
      break;
  }
  return "";
}

void write_records(std::ostream& out, std::span<const StepRecord> records) {
  out << kRecordsHeader << '\n';
  for (const auto& r : records) {
    out << csv_escape(r.user_id) << ',' << format_timestamp(r.hour) << ','
        << r.steps << ',' << source_name(r.source) << ','
        << csv_escape(r.device_model) << '\n';
  }
}

void write_profiles(std::ostream& out,
                    std::span<const RawAttributeProfile> profiles) {
  out << kProfilesHeader << '\n';
  char buf[64];
  auto real = [&buf](const std::optional<double>& v) -> std::string {
    if (!v) return "";
    std::snprintf(buf, sizeof buf, "%.1f", *v);
    return buf;
  };
  for (const auto& p : profiles) {
    out << csv_escape(p.user_id) << ',' << gender_name(p.gender) << ','
        << ethnicity_name(p.ethnicity) << ','
        << (p.age ? std::to_string(*p.age) : std::string()) << ','
        << real(p.height_cm) << ',' << real(p.weight_kg) << ','
        << condition_name(p.heart_condition) << ','
        << condition_name(p.hypertension) << ','
        << condition_name(p.joint_problem) << ',' << condition_name(p.diabetes)
        << '\n';
  }
}

}  // namespace fairaudit
