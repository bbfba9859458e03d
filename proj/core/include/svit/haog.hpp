#pragma once

// Hand-object graph: two hands, the two objects they interact with, existence
// flags for all four nodes and a contact flag per hand.

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace svit {

/// Axis-aligned box in normalised image coordinates, (x1, y1) top-left.
struct BoundingBox {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return width() * height(); }
  bool valid() const;

  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

/// Fixed slot order shared by annotations, generator and prediction heads.
enum class HaogSlot : std::size_t { kLeftHand = 0, kRightHand = 1, kLeftObject = 2, kRightObject = 3 };

inline constexpr std::size_t kHaogNodes = 4;
inline constexpr std::size_t kHaogEdges = 2;

struct Haog {
  std::array<std::optional<BoundingBox>, kHaogNodes> boxes{};
  std::array<bool, kHaogNodes> exists{};
  // contact[k] pairs hand k with object k + 2.
  std::array<bool, kHaogEdges> contact{};

  /// True when both endpoints of edge k exist, i.e. contact[k] is defined.
  bool contact_defined(std::size_t k) const { return exists[k] && exists[k + 2]; }

  friend bool operator==(const Haog&, const Haog&) = default;
};

/// Empty when the graph is valid; otherwise one message per violated rule.
std::vector<std::string> validate_haog(const Haog& h);

double iou(const BoundingBox& a, const BoundingBox& b);
/// Generalised IoU in (-1, 1]. Returns 0 when the enclosing hull has zero area.
double giou(const BoundingBox& a, const BoundingBox& b);

struct HaogRecord {
  std::string image;
  Haog haog;
};

/// Parses one JSON Lines annotation record. Throws ParseError naming the
/// offending field.
HaogRecord parse_haog_record(std::string_view line);

/// Emits one annotation line (no trailing newline), coordinates printed with
/// six decimals. Throws ArgumentError carrying the violations for invalid
/// graphs.
std::string serialize_haog_record(std::string_view image, const Haog& h);

struct HaogCorpusStats {
  std::size_t records = 0;
  std::array<std::size_t, kHaogNodes> exists{};
  std::array<std::size_t, kHaogEdges> contact{};
  std::array<std::size_t, kHaogEdges> contact_defined{};
  std::vector<std::pair<std::size_t, std::string>> errors;  // (line number, message)
};

/// Validates every line of an annotation file's contents and tallies flags.
HaogCorpusStats inspect_haog_corpus(std::string_view contents);

}  // namespace svit
