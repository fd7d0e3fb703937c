#include "fwbench/record.hpp"

#include "fwbench/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>

namespace fwbench {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(Rhythm rhythm) {
  switch (rhythm) {
    case Rhythm::AF: return "AF";
    case Rhythm::AFL: return "AFL";
    case Rhythm::Other: return "OTHER";
  }
  return "OTHER";
}

std::string_view to_string(Sex sex) { return sex == Sex::F ? "F" : "M"; }

Rhythm parse_rhythm(std::string_view text) {
  if (text == "AF") return Rhythm::AF;
  if (text == "AFL") return Rhythm::AFL;
  if (text == "OTHER") return Rhythm::Other;
  fail(ErrorKind::MalformedInput, "unknown rhythm label '" + std::string(text) + "'");
}

Sex parse_sex(std::string_view text) {
  if (text == "F") return Sex::F;
  if (text == "M") return Sex::M;
  fail(ErrorKind::MalformedInput, "unknown sex '" + std::string(text) + "'");
}

std::string_view to_string(WindowLabel label) {
  return label == WindowLabel::AF ? "AF" : "NON_AF";
}

std::string_view to_string(ExclusionReason reason) {
  switch (reason) {
    case ExclusionReason::MixedRhythm: return "MIXED_RHYTHM";
    case ExclusionReason::Afl: return "AFL";
    case ExclusionReason::TooFewQrs: return "TOO_FEW_QRS";
    case ExclusionReason::LowBsqi: return "LOW_BSQI";
  }
  return "UNKNOWN";
}

const Lead& EcgRecord::lead(std::string_view name) const {
  auto it = std::find_if(leads.begin(), leads.end(),
                         [&](const Lead& l) { return l.name == name; });
  if (it == leads.end()) {
    fail(ErrorKind::UnknownLead,
         "record " + record_id + " has no lead '" + std::string(name) + "'");
  }
  return *it;
}

std::vector<std::string> EcgRecord::lead_names() const {
  std::vector<std::string> names;
  names.reserve(leads.size());
  for (const auto& l : leads) names.push_back(l.name);
  return names;
}

void validate(const EcgRecord& record) {
  if (record.sampling_rate <= 0) {
    fail(ErrorKind::MalformedInput, "sampling rate must be positive");
  }
  if (record.leads.empty()) fail(ErrorKind::MalformedInput, "record has no leads");
  const Index m = record.length();
  if (m == 0) fail(ErrorKind::MalformedInput, "record has zero-length signal");
  for (const auto& lead : record.leads) {
    if (lead.samples.size() != m) {
      fail(ErrorKind::LengthMismatch, "lead '" + lead.name + "' has " +
                                          std::to_string(lead.samples.size()) +
                                          " samples, expected " + std::to_string(m));
    }
  }
  Index previous_end = 0;
  for (const auto& iv : record.rhythm_intervals) {
    if (iv.start < 0 || iv.end > m || iv.start >= iv.end) {
      fail(ErrorKind::OutOfRange, "annotation [" + std::to_string(iv.start) + ", " +
                                      std::to_string(iv.end) + ") outside signal of length " +
                                      std::to_string(m));
    }
    if (iv.start < previous_end) {
      fail(ErrorKind::OutOfRange, "annotations overlap or are unsorted at sample " +
                                      std::to_string(iv.start));
    }
    previous_end = iv.end;
  }
}

namespace {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::MissingFile, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) fail(ErrorKind::Io, "write failed for " + path.string());
}

json parse_json(const fs::path& path) {
  const std::string text = read_file(path);
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorKind::MalformedInput, path.string() + ": " + e.what());
  }
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    const std::size_t next = line.find(',', pos);
    out.push_back(line.substr(pos, next == std::string_view::npos ? next : next - pos));
    if (next == std::string_view::npos) break;
    pos = next + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

double parse_double(std::string_view token, const fs::path& path, std::size_t line_no) {
  token = trim(token);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec != std::errc() || ptr != token.data() + token.size() || token.empty()) {
    fail(ErrorKind::MalformedInput, path.string() + ":" + std::to_string(line_no) +
                                        ": not a number '" + std::string(token) + "'");
  }
  return value;
}

void append_number(std::string& out, double value) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  out.append(buf, ptr);
}

void load_csv_signal(const fs::path& path, EcgRecord& record) {
  const std::string text = read_file(path);
  if (text.empty()) fail(ErrorKind::MalformedInput, path.string() + " is empty");

  std::vector<std::string_view> lines;
  std::string_view rest(text);
  while (!rest.empty()) {
    const std::size_t nl = rest.find('\n');
    std::string_view line = rest.substr(0, nl);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    if (nl == std::string_view::npos) break;
    rest.remove_prefix(nl + 1);
  }
  while (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();
  if (lines.size() < 2) fail(ErrorKind::MalformedInput, path.string() + ": missing header rows");

  const std::string_view fs_line = trim(lines[0]);
  if (fs_line.rfind("fs=", 0) != 0) {
    fail(ErrorKind::MalformedInput, path.string() + ": first row must be fs=<Hz>");
  }
  const double fs = parse_double(fs_line.substr(3), path, 1);
  if (fs <= 0.0 || fs != static_cast<double>(static_cast<int>(fs))) {
    fail(ErrorKind::MalformedInput, path.string() + ": sampling rate must be a positive integer");
  }
  record.sampling_rate = static_cast<int>(fs);

  const auto names = split_commas(lines[1]);
  const std::size_t n_leads = names.size();
  const std::size_t n_rows = lines.size() - 2;
  if (n_rows == 0) fail(ErrorKind::MalformedInput, path.string() + ": zero-length signal");

  record.leads.clear();
  for (const auto& name : names) {
    const std::string_view trimmed = trim(name);
    if (trimmed.empty()) fail(ErrorKind::MalformedInput, path.string() + ": empty lead name");
    record.leads.push_back({std::string(trimmed), Signal(static_cast<Index>(n_rows))});
  }
  for (std::size_t r = 0; r < n_rows; ++r) {
    const auto cells = split_commas(lines[r + 2]);
    if (cells.size() != n_leads) {
      fail(ErrorKind::LengthMismatch, path.string() + ":" + std::to_string(r + 3) + ": expected " +
                                          std::to_string(n_leads) + " columns, got " +
                                          std::to_string(cells.size()));
    }
    for (std::size_t c = 0; c < n_leads; ++c) {
      record.leads[c].samples[static_cast<Index>(r)] = parse_double(cells[c], path, r + 3);
    }
  }
}

void load_f32_signal(const fs::path& dir, EcgRecord& record) {
  const json meta = parse_json(dir / "signal.meta.json");
  std::vector<std::string> names;
  long long n_samples = 0;
  try {
    record.sampling_rate = meta.at("fs").get<int>();
    names = meta.at("leads").get<std::vector<std::string>>();
    n_samples = meta.at("n_samples").get<long long>();
  } catch (const json::exception& e) {
    fail(ErrorKind::MalformedInput, "signal.meta.json: " + std::string(e.what()));
  }
  if (names.empty()) fail(ErrorKind::MalformedInput, "signal.meta.json lists no leads");

  const std::string bytes = read_file(dir / "signal.f32");
  if (bytes.empty()) fail(ErrorKind::MalformedInput, "signal.f32 is empty");
  const std::size_t frame = 4 * names.size();
  if (bytes.size() % frame != 0) {
    fail(ErrorKind::LengthMismatch, "signal.f32 size is not a multiple of the lead count");
  }
  const auto n = static_cast<Index>(bytes.size() / frame);
  if (n != n_samples) {
    fail(ErrorKind::LengthMismatch, "signal.f32 holds " + std::to_string(n) +
                                        " samples per lead, descriptor says " +
                                        std::to_string(n_samples));
  }
  record.leads.clear();
  for (const auto& name : names) record.leads.push_back({name, Signal(n)});
  for (Index i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < names.size(); ++c) {
      std::uint32_t raw = 0;
      std::memcpy(&raw, bytes.data() + static_cast<std::size_t>(i) * frame + 4 * c, 4);
      if constexpr (std::endian::native == std::endian::big) raw = __builtin_bswap32(raw);
      record.leads[c].samples[i] = static_cast<double>(std::bit_cast<float>(raw));
    }
  }
}

}  // namespace

EcgRecord load_record(const fs::path& dir) {
  EcgRecord record;
  record.record_id = dir.filename().string();
  if (record.record_id.empty()) record.record_id = dir.parent_path().filename().string();

  if (fs::exists(dir / "signal.csv")) {
    load_csv_signal(dir / "signal.csv", record);
  } else if (fs::exists(dir / "signal.f32")) {
    load_f32_signal(dir, record);
  } else {
    fail(ErrorKind::MissingFile, dir.string() + ": no signal.csv or signal.f32");
  }

  const json ann = parse_json(dir / "annotations.json");
  if (!ann.is_array()) fail(ErrorKind::MalformedInput, "annotations.json must be an array");
  try {
    for (const auto& item : ann) {
      record.rhythm_intervals.push_back({item.at("start").get<Index>(),
                                         item.at("end").get<Index>(),
                                         parse_rhythm(item.at("label").get<std::string>())});
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::MalformedInput, "annotations.json: " + std::string(e.what()));
  }

  if (fs::exists(dir / "meta.json")) {
    const json meta = parse_json(dir / "meta.json");
    try {
      if (meta.contains("age") && !meta["age"].is_null()) record.age = meta["age"].get<int>();
      if (meta.contains("sex") && !meta["sex"].is_null()) {
        record.sex = parse_sex(meta["sex"].get<std::string>());
      }
    } catch (const json::exception& e) {
      fail(ErrorKind::MalformedInput, "meta.json: " + std::string(e.what()));
    }
  }

  validate(record);
  return record;
}

void write_record(const EcgRecord& record, const fs::path& dir, SignalFormat format) {
  validate(record);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorKind::Io, "cannot create " + dir.string() + ": " + ec.message());

  const Index m = record.length();
  if (format == SignalFormat::Csv) {
    std::string out;
    out.reserve(static_cast<std::size_t>(m) * record.leads.size() * 12 + 64);
    out += "fs=" + std::to_string(record.sampling_rate) + "\n";
    for (std::size_t c = 0; c < record.leads.size(); ++c) {
      if (c) out += ',';
      out += record.leads[c].name;
    }
    out += '\n';
    for (Index i = 0; i < m; ++i) {
      for (std::size_t c = 0; c < record.leads.size(); ++c) {
        if (c) out += ',';
        append_number(out, record.leads[c].samples[i]);
      }
      out += '\n';
    }
    write_file(dir / "signal.csv", out);
  } else {
    std::string bytes(static_cast<std::size_t>(m) * record.leads.size() * 4, '\0');
    std::size_t pos = 0;
    for (Index i = 0; i < m; ++i) {
      for (const auto& lead : record.leads) {
        auto raw = std::bit_cast<std::uint32_t>(static_cast<float>(lead.samples[i]));
        if constexpr (std::endian::native == std::endian::big) raw = __builtin_bswap32(raw);
        std::memcpy(bytes.data() + pos, &raw, 4);
        pos += 4;
      }
    }
    write_file(dir / "signal.f32", bytes);
    json meta = {{"fs", record.sampling_rate},
                 {"leads", record.lead_names()},
                 {"n_samples", m},
                 {"format", "f32le"}};
    write_file(dir / "signal.meta.json", meta.dump(2) + "\n");
  }

  json ann = json::array();
  for (const auto& iv : record.rhythm_intervals) {
    ann.push_back({{"start", iv.start}, {"end", iv.end}, {"label", to_string(iv.label)}});
  }
  write_file(dir / "annotations.json", ann.dump(2) + "\n");

  json meta = {{"age", nullptr}, {"sex", nullptr}};
  if (record.age) meta["age"] = *record.age;
  if (record.sex) meta["sex"] = to_string(*record.sex);
  write_file(dir / "meta.json", meta.dump(2) + "\n");
}

std::vector<Window> segment_windows(const EcgRecord& record, std::string_view lead_name) {
  const Lead& lead = record.lead(lead_name);
  const Index n = static_cast<Index>(kWindowSeconds * record.sampling_rate);
  const Index m = lead.samples.size();
  const Index count = n > 0 ? m / n : 0;

  std::vector<Window> windows;
  windows.reserve(static_cast<std::size_t>(count));
  for (Index w = 0; w < count; ++w) {
    Window win;
    win.record_id = record.record_id;
    win.lead_name = lead.name;
    win.index = w;
    win.start = w * n;
    win.length = n;

    Index af_samples = 0;
    for (const auto& iv : record.rhythm_intervals) {
      const Index lo = std::max(iv.start, win.start);
      const Index hi = std::min(iv.end, win.end());
      if (lo >= hi) continue;
      if (iv.label == Rhythm::AF) af_samples += hi - lo;
      if (iv.label == Rhythm::AFL) win.overlaps_afl = true;
    }
    if (af_samples == n) {
      win.label = WindowLabel::AF;
    } else {
      win.label = WindowLabel::NonAF;
      win.mixed_rhythm = af_samples > 0;
    }
    if (win.mixed_rhythm) win.exclusion = ExclusionReason::MixedRhythm;
    windows.push_back(std::move(win));
  }
  return windows;
}

Window apply_exclusions(Window window, const QrsAnnotations& qrs, double bsqi) {
  if (window.mixed_rhythm) {
    window.exclusion = ExclusionReason::MixedRhythm;
  } else if (window.overlaps_afl) {
    window.exclusion = ExclusionReason::Afl;
  } else if (static_cast<int>(qrs.size()) < kMinQrsPerWindow) {
    window.exclusion = ExclusionReason::TooFewQrs;
  } else if (bsqi < kMinBsqi) {
    window.exclusion = ExclusionReason::LowBsqi;
  } else {
    window.exclusion.reset();
  }
  return window;
}

}  // namespace fwbench
