#include "vrulab/eval.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "vrulab/error.hpp"

namespace vrulab::eval {

namespace {

bool is_trim_char(unsigned char c) { return std::isspace(c) || std::ispunct(c); }

std::string clean(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && is_trim_char(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && is_trim_char(static_cast<unsigned char>(s[e - 1]))) --e;
  std::string out(s.substr(b, e - b));
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string join_ids(const std::vector<std::int64_t>& ids) {
  std::string s;
  for (auto id : ids) {
    if (!s.empty()) s += ", ";
    s += std::to_string(id);
  }
  return s;
}

}  // namespace

Answer Answer::from_text(std::string_view cleaned) {
  if (cleaned.empty()) return {AnswerKind::Unparseable, ""};
  if (cleaned == env::kUnknown) return {AnswerKind::Unknown, std::string(env::kUnknown)};
  return {AnswerKind::Object, std::string(cleaned)};
}

Answer extract_answer(std::string_view raw, ExtractMode mode) {
  if (mode == ExtractMode::Direct) {
    std::size_t b = 0;
    while (b < raw.size() && std::isspace(static_cast<unsigned char>(raw[b]))) ++b;
    std::size_t e = b;
    while (e < raw.size() && !std::isspace(static_cast<unsigned char>(raw[e]))) ++e;
    return Answer::from_text(clean(raw.substr(b, e - b)));
  }
  constexpr std::string_view open = "<ans>", close = "</ans>";
  const auto start = raw.find(open);
  if (start == std::string_view::npos) return {};
  const auto body = start + open.size();
  const auto stop = raw.find(close, body);
  if (stop == std::string_view::npos) return {};
  return Answer::from_text(clean(raw.substr(body, stop - body)));
}

PredictionRecord make_prediction(std::int64_t id, std::string raw, ExtractMode mode) {
  PredictionRecord r;
  r.episode_id = id;
  r.extracted = extract_answer(raw, mode);
  r.raw_output = std::move(raw);
  return r;
}

double EvalReport::average() const {
  double sum = 0;
  int n = 0;
  for (const auto& [steps, b] : per_bucket) {
    if (b.count == 0) continue;
    sum += b.accuracy();
    ++n;
  }
  return n ? sum / n : 0.0;
}

EvalReport accuracy(std::span<const PredictionRecord> preds,
                    std::span<const env::Episode> golds) {
  std::map<std::int64_t, const env::Episode*> by_id;
  for (const auto& ep : golds) by_id.emplace(ep.id, &ep);

  std::vector<std::int64_t> missing, duplicated;
  std::set<std::int64_t> seen;
  for (const auto& p : preds) {
    if (!by_id.count(p.episode_id)) missing.push_back(p.episode_id);
    else if (!seen.insert(p.episode_id).second) duplicated.push_back(p.episode_id);
  }
  if (!missing.empty() || !duplicated.empty()) {
    std::string msg = "invalid predictions:";
    if (!missing.empty()) msg += " unknown ids [" + join_ids(missing) + "]";
    if (!duplicated.empty()) msg += " duplicate ids [" + join_ids(duplicated) + "]";
    throw ValidationError(msg);
  }

  EvalReport report;
  for (const auto& ep : golds) report.per_bucket[ep.n_steps()].count++;
  for (const auto& p : preds) {
    const auto& gold = *by_id.at(p.episode_id);
    if (p.extracted.matches(gold)) report.per_bucket[gold.n_steps()].correct++;
  }
  return report;
}

std::string report_csv(const EvalReport& report) {
  std::string out = "n_steps,count,correct,accuracy\n";
  char buf[64];
  for (const auto& [n, b] : report.per_bucket) {
    out += std::to_string(n) + "," + std::to_string(b.count) + "," + std::to_string(b.correct) + ",";
    if (b.count == 0) {
      out += "n/a";
    } else {
      std::snprintf(buf, sizeof buf, "%.6f", b.accuracy());
      out += buf;
    }
    out += "\n";
  }
  return out;
}

EvalReport parse_report_csv(std::string_view csv) {
  std::istringstream in{std::string(csv)};
  std::string line;
  if (!std::getline(in, line) || line != "n_steps,count,correct,accuracy") {
    throw ValidationError("report CSV has an unexpected header");
  }
  EvalReport report;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string n, count, correct;
    std::getline(row, n, ',');
    std::getline(row, count, ',');
    std::getline(row, correct, ',');
    try {
      report.per_bucket[std::stoi(n)] = BucketScore{std::stoi(count), std::stoi(correct)};
    } catch (const std::exception&) {
      throw ValidationError("malformed report row '" + line + "'");
    }
  }
  return report;
}

std::string report_table(const EvalReport& report) {
  std::map<int, const BucketScore*> cols;
  for (int n = 2; n <= 5; ++n) cols[n] = nullptr;
  for (const auto& [n, b] : report.per_bucket) cols[n] = &b;

  std::vector<std::string> header, values;
  char buf[32];
  for (const auto& [n, b] : cols) {
    header.push_back(std::to_string(n) + "-step");
    if (b == nullptr || b->count == 0) {
      values.emplace_back("n/a");
    } else {
      std::snprintf(buf, sizeof buf, "%.2f", 100.0 * b->accuracy());
      values.emplace_back(buf);
    }
  }
  header.emplace_back("Avg.");
  const bool any = std::any_of(report.per_bucket.begin(), report.per_bucket.end(),
                               [](const auto& kv) { return kv.second.count > 0; });
  if (any) {
    std::snprintf(buf, sizeof buf, "%.2f", 100.0 * report.average());
    values.emplace_back(buf);
  } else {
    values.emplace_back("n/a");
  }

  std::string top, bottom;
  for (std::size_t i = 0; i < header.size(); ++i) {
    const std::size_t w = std::max(header[i].size(), values[i].size());
    if (i) {
      top += "  ";
      bottom += "  ";
    }
    top += std::string(w - header[i].size(), ' ') + header[i];
    bottom += std::string(w - values[i].size(), ' ') + values[i];
  }
  return top + "\n" + bottom + "\n";
}

void write_predictions(std::ostream& out, std::span<const PredictionRecord> preds) {
  for (const auto& p : preds) {
    nlohmann::ordered_json j;
    j["id"] = p.episode_id;
    j["raw"] = p.raw_output;
    out << j.dump() << '\n';
  }
}

std::vector<PredictionRecord> read_predictions(std::istream& in, ExtractMode mode) {
  std::vector<PredictionRecord> preds;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      preds.push_back(make_prediction(j.at("id").get<std::int64_t>(),
                                      j.at("raw").get<std::string>(), mode));
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(std::string("malformed prediction record: ") + e.what());
    }
  }
  return preds;
}

}  // namespace vrulab::eval
