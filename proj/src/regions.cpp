#include "gliofuse/regions.hpp"

#include <algorithm>
#include <sstream>

namespace gliofuse {

std::vector<std::string> RegionDefinitions::names() const {
  std::vector<std::string> out;
  for (const auto& e : encoding.entries()) out.push_back(e.name);
  for (const auto& [name, parts] : composites) out.push_back(name);
  return out;
}

std::vector<std::uint8_t> RegionDefinitions::codes_of(const std::string& region) const {
  if (auto code = encoding.code_of(region)) return {*code};
  auto it = composites.find(region);
  if (it == composites.end()) {
    std::string valid;
    for (const auto& n : names()) valid += (valid.empty() ? "" : ", ") + n;
    throw InputError("unknown region '" + region + "' (valid: " + valid + ")");
  }
  std::vector<std::uint8_t> codes;
  for (const auto& part : it->second) {
    auto code = encoding.code_of(part);
    if (!code) {
      throw InputError("composite region " + region + " refers to unknown base region " + part);
    }
    codes.push_back(*code);
  }
  std::sort(codes.begin(), codes.end());
  codes.erase(std::unique(codes.begin(), codes.end()), codes.end());
  return codes;
}

std::string RegionDefinitions::describe() const {
  std::ostringstream os;
  for (const auto& e : encoding.entries()) {
    os << e.name << " = label " << static_cast<int>(e.code) << "\n";
  }
  for (const auto& [name, parts] : composites) {
    os << name << " =";
    for (std::size_t i = 0; i < parts.size(); ++i) os << (i ? " + " : " ") << parts[i];
    os << "  (labels";
    for (auto c : codes_of(name)) os << " " << static_cast<int>(c);
    os << ")\n";
  }
  return os.str();
}

Mask binarize(const LabelMap& labels, const std::string& region, const RegionDefinitions& defs) {
  std::array<std::uint8_t, 256> member{};
  for (auto c : defs.codes_of(region)) member[c] = 1;
  Mask out(labels.geometry(), std::uint8_t{0});
  for (std::size_t i = 0; i < labels.size(); ++i) out[i] = member[labels[i]];
  return out;
}

}  // namespace gliofuse
