#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "fairaudit/dataset.hpp"

namespace fairaudit {

// Minimal RFC 4180 reader: quoted fields, doubled quotes, CRLF tolerant.
class CsvReader {
 public:
  explicit CsvReader(std::istream& in) : in_(in) {}

  // False at end of input.
  bool next(std::vector<std::string>& fields);
  std::size_t line() const { return line_; }

 private:
  std::istream& in_;
  std::size_t line_ = 0;
};

std::string csv_escape(std::string_view field);

inline const char* kRecordsHeader = "user_id,timestamp,steps,source,device_model";
inline const char* kProfilesHeader =
    "user_id,gender,ethnicity,age,height_cm,weight_kg,heart_condition,"
    "hypertension,joint_problem,diabetes";
inline const char* kReferenceHeader = "attribute,minority_per_majority_ratio";

// Loaders throw DataError naming the path and line of the first problem.
std::vector<StepRecord> read_records(const std::filesystem::path& path);
std::vector<StepRecord> read_records(std::istream& in, const std::string& origin);
std::vector<RawAttributeProfile> read_profiles(const std::filesystem::path& path);
std::vector<RawAttributeProfile> read_profiles(std::istream& in,
                                               const std::string& origin);

void write_records(std::ostream& out, std::span<const StepRecord> records);
void write_profiles(std::ostream& out, std::span<const RawAttributeProfile> profiles);

// Rejects duplicate (user, source, hour) entries.
void validate_records(std::span<const StepRecord> records);

std::string_view gender_name(Gender g);
std::string_view ethnicity_name(Ethnicity e);
std::string_view condition_name(Condition c);

}  // namespace fairaudit
