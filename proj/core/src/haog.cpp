#include "svit/haog.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include <nlohmann/json.hpp>

#include "svit/errors.hpp"

namespace svit {

using nlohmann::json;

bool BoundingBox::valid() const {
  return 0.0 <= x1 && x1 <= x2 && x2 <= 1.0 && 0.0 <= y1 && y1 <= y2 && y2 <= 1.0;
}

std::vector<std::string> validate_haog(const Haog& h) {
  std::vector<std::string> out;
  for (std::size_t j = 0; j < kHaogNodes; ++j) {
    const std::string slot = "boxes[" + std::to_string(j) + "]";
    if (h.exists[j] && !h.boxes[j]) out.push_back(slot + " missing while exists[" + std::to_string(j) + "]=1");
    if (!h.exists[j] && h.boxes[j]) out.push_back(slot + " present while exists[" + std::to_string(j) + "]=0");
    if (h.boxes[j] && !h.boxes[j]->valid()) out.push_back(slot + " out of range or inverted");
  }
  for (std::size_t k = 0; k < kHaogEdges; ++k) {
    if (!h.contact[k]) continue;
    if (!h.exists[k]) out.push_back("contact[" + std::to_string(k) + "] requires exists[" + std::to_string(k) + "]");
    if (!h.exists[k + 2])
      out.push_back("contact[" + std::to_string(k) + "] requires exists[" + std::to_string(k + 2) + "]");
  }
  return out;
}

namespace {

double intersection_area(const BoundingBox& a, const BoundingBox& b) {
  const double w = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double h = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  return (w > 0 && h > 0) ? w * h : 0.0;
}

}  // namespace

double iou(const BoundingBox& a, const BoundingBox& b) {
  const double inter = intersection_area(a, b);
  const double uni = a.area() + b.area() - inter;
  return uni > 0 ? inter / uni : 0.0;
}

double giou(const BoundingBox& a, const BoundingBox& b) {
  const double hull = (std::max(a.x2, b.x2) - std::min(a.x1, b.x1)) * (std::max(a.y2, b.y2) - std::min(a.y1, b.y1));
  if (hull <= 0) return 0.0;
  const double inter = intersection_area(a, b);
  const double uni = a.area() + b.area() - inter;
  const double i = uni > 0 ? inter / uni : 0.0;
  return i - (hull - uni) / hull;
}

namespace {

[[noreturn]] void fail(const std::string& field, const std::string& what) {
  throw ParseError(field + ": " + what);
}

bool parse_flag(const json& v, const std::string& field) {
  if (!v.is_number_integer()) fail(field, "expected 0 or 1");
  const auto x = v.get<long long>();
  if (x != 0 && x != 1) fail(field, "expected 0 or 1");
  return x == 1;
}

void append_fixed(std::string& out, double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  out += buf;
}

}  // namespace

HaogRecord parse_haog_record(std::string_view line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    fail("record", std::string("malformed JSON (") + e.what() + ")");
  }
  if (!j.is_object()) fail("record", "expected a JSON object");
  for (const char* key : {"image", "boxes", "exists", "contact"})
    if (!j.contains(key)) fail(key, "missing");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (it.key() != "image" && it.key() != "boxes" && it.key() != "exists" && it.key() != "contact")
      fail(it.key(), "unknown field");

  HaogRecord rec;
  if (!j["image"].is_string()) fail("image", "expected a string");
  rec.image = j["image"].get<std::string>();

  const json& boxes = j["boxes"];
  const json& exists = j["exists"];
  const json& contact = j["contact"];
  if (!boxes.is_array() || boxes.size() != kHaogNodes) fail("boxes", "expected an array of 4 entries");
  if (!exists.is_array() || exists.size() != kHaogNodes) fail("exists", "expected an array of 4 flags");
  if (!contact.is_array() || contact.size() != kHaogEdges) fail("contact", "expected an array of 2 flags");

  Haog& h = rec.haog;
  for (std::size_t s = 0; s < kHaogNodes; ++s) {
    const std::string field = "boxes[" + std::to_string(s) + "]";
    h.exists[s] = parse_flag(exists[s], "exists[" + std::to_string(s) + "]");
    const json& b = boxes[s];
    if (b.is_null()) {
      if (h.exists[s]) fail(field, "missing");
      continue;
    }
    if (!b.is_array() || b.size() != 4) fail(field, "expected [x1, y1, x2, y2] or null");
    double c[4];
    for (std::size_t k = 0; k < 4; ++k) {
      if (!b[k].is_number()) fail(field, "non-numeric coordinate");
      c[k] = b[k].get<double>();
      if (!(c[k] >= 0.0 && c[k] <= 1.0)) fail(field, "coordinate out of [0, 1]");
    }
    if (c[0] > c[2] || c[1] > c[3]) fail(field, "corners inverted");
    if (!h.exists[s]) fail(field, "present while exists[" + std::to_string(s) + "]=0");
    h.boxes[s] = BoundingBox{c[0], c[1], c[2], c[3]};
  }
  for (std::size_t k = 0; k < kHaogEdges; ++k) {
    h.contact[k] = parse_flag(contact[k], "contact[" + std::to_string(k) + "]");
    if (h.contact[k] && !h.contact_defined(k))
      fail("contact[" + std::to_string(k) + "]", "requires exists[" + std::to_string(k) + "] and exists[" +
                                                     std::to_string(k + 2) + "]");
  }
  return rec;
}

std::string serialize_haog_record(std::string_view image, const Haog& h) {
  const auto violations = validate_haog(h);
  if (!violations.empty()) {
    std::string msg = "invalid Haog:";
    for (const auto& v : violations) msg += " " + v + ";";
    throw ArgumentError(msg);
  }
  std::string out = "{\"image\": ";
  out += json(std::string(image)).dump();
  out += ", \"boxes\": [";
  for (std::size_t s = 0; s < kHaogNodes; ++s) {
    if (s) out += ", ";
    if (!h.boxes[s]) {
      out += "null";
      continue;
    }
    const BoundingBox& b = *h.boxes[s];
    out += '[';
    append_fixed(out, b.x1);
    out += ", ";
    append_fixed(out, b.y1);
    out += ", ";
    append_fixed(out, b.x2);
    out += ", ";
    append_fixed(out, b.y2);
    out += ']';
  }
  out += "], \"exists\": [";
  for (std::size_t s = 0; s < kHaogNodes; ++s) {
    if (s) out += ", ";
    out += h.exists[s] ? '1' : '0';
  }
  out += "], \"contact\": [";
  out += h.contact[0] ? '1' : '0';
  out += ", ";
  out += h.contact[1] ? '1' : '0';
  out += "]}";
  return out;
}

HaogCorpusStats inspect_haog_corpus(std::string_view contents) {
  HaogCorpusStats stats;
  std::istringstream in{std::string(contents)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const HaogRecord rec = parse_haog_record(line);
      ++stats.records;
      for (std::size_t s = 0; s < kHaogNodes; ++s) stats.exists[s] += rec.haog.exists[s];
      for (std::size_t k = 0; k < kHaogEdges; ++k) {
        stats.contact[k] += rec.haog.contact[k];
        stats.contact_defined[k] += rec.haog.contact_defined(k);
      }
    } catch (const ParseError& e) {
      stats.errors.emplace_back(lineno, e.what());
    }
  }
  return stats;
}

}  // namespace svit
