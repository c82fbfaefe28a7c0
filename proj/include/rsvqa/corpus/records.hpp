#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "rsvqa/common/image.hpp"

namespace rsvqa::corpus {

/// One geolocated sample with both modalities normalized to [0,1].
struct PatchRecord {
  std::string patch_id;
  double lon = 0.0;
  double lat = 0.0;
  Image optical;  // [n_o, H, W]
  Image sar;      // [n_s, H, W]: VV, VH, VV-VH ratio
  std::vector<std::uint8_t> labels;
  // Raw backscatter in dB, kept when known so the record can be written back
  // to disk. Empty for records built directly in normalized form.
  Image vv_db;
  Image vh_db;

  bool operator==(const PatchRecord&) const = default;
};

enum class QuestionType { yes_no, land_cover };
enum class Split { train, val, test };

std::string to_string(QuestionType t);
std::string to_string(Split s);
QuestionType question_type_from_string(std::string_view text);
Split split_from_string(std::string_view text);

struct QARecord {
  std::string patch_id;
  std::string question;
  QuestionType qtype = QuestionType::yes_no;
  std::string answer;
  Split split = Split::train;

  bool operator==(const QARecord&) const = default;
};

}  // namespace rsvqa::corpus
