#pragma once

#include "fwbench/types.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace fwbench {

enum class Rhythm { AF, AFL, Other };
enum class Sex { F, M };

std::string_view to_string(Rhythm rhythm);
std::string_view to_string(Sex sex);
Rhythm parse_rhythm(std::string_view text);
Sex parse_sex(std::string_view text);

/// Half-open sample interval [start, end) carrying one rhythm label.
struct RhythmInterval {
  Index start = 0;
  Index end = 0;
  Rhythm label = Rhythm::Other;

  bool operator==(const RhythmInterval&) const = default;
};

struct Lead {
  std::string name;
  Signal samples;
};

/// Multi-lead ECG with rhythm annotations and optional demographics.
///
/// All leads share one length; rhythm intervals are sorted, disjoint and lie
/// inside the signal. Samples not covered by any interval count as `Other`.
struct EcgRecord {
  std::string record_id;
  int sampling_rate = 0;
  std::vector<Lead> leads;
  std::vector<RhythmInterval> rhythm_intervals;
  std::optional<int> age;
  std::optional<Sex> sex;

  Index length() const { return leads.empty() ? 0 : leads.front().samples.size(); }
  const Lead& lead(std::string_view name) const;
  std::vector<std::string> lead_names() const;
};

/// Throws the matching `Error` if any record invariant is violated.
void validate(const EcgRecord& record);

enum class SignalFormat { Csv, Float32 };

EcgRecord load_record(const std::filesystem::path& dir);
void write_record(const EcgRecord& record, const std::filesystem::path& dir,
                  SignalFormat format = SignalFormat::Csv);

enum class WindowLabel { AF, NonAF };
enum class ExclusionReason { MixedRhythm, Afl, TooFewQrs, LowBsqi };

std::string_view to_string(WindowLabel label);
std::string_view to_string(ExclusionReason reason);

inline constexpr int kMinQrsPerWindow = 10;
inline constexpr double kMinBsqi = 0.8;
inline constexpr double kWindowSeconds = 60.0;

/// One-minute single-lead analysis unit.
struct Window {
  std::string record_id;
  std::string lead_name;
  Index index = 0;
  Index start = 0;
  Index length = 0;
  WindowLabel label = WindowLabel::NonAF;
  bool mixed_rhythm = false;
  bool overlaps_afl = false;
  std::optional<ExclusionReason> exclusion;

  bool included() const { return !exclusion.has_value(); }
  Index end() const { return start + length; }
};

/// Tiles the lead into consecutive full minutes; a trailing partial minute is
/// dropped. Mixed-rhythm windows come back already excluded.
std::vector<Window> segment_windows(const EcgRecord& record, std::string_view lead_name);

/// First failing criterion in the order mixed rhythm, AFL, QRS count, bSQI.
/// `qrs` holds the detections inside the window.
Window apply_exclusions(Window window, const QrsAnnotations& qrs, double bsqi);

}  // namespace fwbench
