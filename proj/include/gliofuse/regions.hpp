#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "gliofuse/volume.hpp"

namespace gliofuse {

/// Report column order: ET, NETC, RC, SNFH, TC, WT.
inline const std::array<std::string, 6> kReportRegions = {"ET", "NETC", "RC", "SNFH", "TC", "WT"};

/// Base regions come from the label encoding; composites are unions of base
/// regions. Defaults: TC = ET + NETC, WT = ET + NETC + SNFH (RC excluded).
struct RegionDefinitions {
  LabelEncoding encoding = LabelEncoding::standard();
  std::map<std::string, std::vector<std::string>> composites = {
      {"TC", {"ET", "NETC"}},
      {"WT", {"ET", "NETC", "SNFH"}},
  };

  std::vector<std::string> names() const;

  /// Label codes belonging to `region`. Unknown names throw InputError
  /// listing the valid ones.
  std::vector<std::uint8_t> codes_of(const std::string& region) const;

  /// Human-readable listing, one region per line.
  std::string describe() const;
};

Mask binarize(const LabelMap& labels, const std::string& region,
              const RegionDefinitions& defs = RegionDefinitions{});

}  // namespace gliofuse
