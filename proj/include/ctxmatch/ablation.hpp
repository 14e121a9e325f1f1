#pragma once

#include <string_view>

#include "ctxmatch/util.hpp"

namespace ctxmatch {

// One component disabled per mode, mirroring the ablation table rows.
enum class AblationMode {
  None,      // full pipeline
  ShareOff,  // context encoder gets its own parameters
  CsRandom,  // selector bypassed: K seeded-uniform candidates
  CsTopk,    // selector bypassed: K highest retrieval scores
  RsOff,     // result combination bypassed: context model decides alone
};

inline AblationMode ablation_from_string(std::string_view s) {
  if (s == "none") return AblationMode::None;
  if (s == "share_off") return AblationMode::ShareOff;
  if (s == "cs_random") return AblationMode::CsRandom;
  if (s == "cs_topk") return AblationMode::CsTopk;
  if (s == "rs_off") return AblationMode::RsOff;
  fail("unknown ablation mode '", s,
       "' (expected none|share_off|cs_random|cs_topk|rs_off)");
}

inline const char* to_string(AblationMode m) {
  switch (m) {
    case AblationMode::None: return "none";
    case AblationMode::ShareOff: return "share_off";
    case AblationMode::CsRandom: return "cs_random";
    case AblationMode::CsTopk: return "cs_topk";
    case AblationMode::RsOff: return "rs_off";
  }
  return "none";
}

}  // namespace ctxmatch
