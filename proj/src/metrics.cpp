#include "shillbench/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>
#include <unordered_map>

namespace shillbench {

namespace {

std::string fmt(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

void require_increasing(const std::vector<std::size_t>& ks) {
  if (ks.empty()) throw MetricError("ks must not be empty");
  for (std::size_t n = 0; n < ks.size(); ++n) {
    if (ks[n] == 0) throw MetricError("ks must be positive");
    if (n > 0 && ks[n] <= ks[n - 1]) throw MetricError("ks must be strictly increasing");
  }
}

double safe_ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

ClassMetrics class_metrics(std::size_t tp, std::size_t fp, std::size_t fn, std::size_t tn) {
  ClassMetrics c{tp, fp, fn, tn, safe_ratio(tp, tp + fp), safe_ratio(tp, tp + fn), 0.0};
  const double sum = c.precision + c.recall;
  c.f1 = sum > 0.0 ? 2.0 * c.precision * c.recall / sum : 0.0;
  return c;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw MetricError(path.string() + ": cannot write");
  out << text;
  if (!out) throw MetricError(path.string() + ": write failed");
}

nlohmann::json detection_to_json(const DetectionResult& r) {
  nlohmann::json users = nlohmann::json::array();
  for (const auto& v : r.users) users.push_back({{"user_id", v.user_id}, {"score", v.score}, {"fake", v.fake}});
  return {{"detector", r.detector}, {"users", users}};
}

DetectionResult detection_from_json(const nlohmann::json& j) {
  DetectionResult r;
  r.detector = j.at("detector").get<std::string>();
  for (const auto& v : j.at("users")) {
    r.users.push_back({v.at("user_id").get<std::string>(), v.at("score").get<double>(),
                       v.at("fake").get<bool>()});
  }
  return r;
}

}  // namespace

// ---------------------------------------------------------------------------
// Attack metrics

double AttackMetrics::at(std::size_t k) const {
  for (std::size_t n = 0; n < ks.size(); ++n) {
    if (ks[n] == k) return mean_hr[n];
  }
  throw MetricError("HR@" + std::to_string(k) + " was not evaluated");
}

AttackMetrics hit_ratio_at_k(const MFModel& model, const Dataset& train,
                             const std::vector<Index>& targets,
                             const std::vector<std::size_t>& ks) {
  require_increasing(ks);
  if (targets.empty()) throw MetricError("no target items");
  if (train.n_users() != model.n_users() || train.n_items() != model.n_items()) {
    throw MetricError("training data does not match the model dimensions");
  }
  for (Index t : targets) {
    if (t >= train.n_items()) throw MetricError("target item outside the catalog");
  }

  const std::size_t nk = ks.size();
  std::vector<std::size_t> pool(targets.size(), 0);
  std::vector<std::vector<std::size_t>> hits(targets.size(), std::vector<std::size_t>(nk, 0));
  std::vector<bool> exclude(train.n_items(), false);
  for (Index u = 0; u < train.n_users(); ++u) {
    if (train.provenance(u) != Provenance::kReal) continue;
    const auto row = train.user_interactions(u);
    for (const auto& x : row) exclude[x.item] = true;
    bool any = false;
    for (Index t : targets) any = any || !exclude[t];
    if (any) {
      const Eigen::VectorXd s = score_all(model, u);
      for (std::size_t n = 0; n < targets.size(); ++n) {
        const Index t = targets[n];
        if (exclude[t]) continue;
        ++pool[n];
        // Position of t in the ranking used by rank_topk.
        std::size_t rank = 0;
        for (Index j = 0; j < train.n_items(); ++j) {
          if (j == t || exclude[j]) continue;
          if (s[j] > s[t] || (s[j] == s[t] && j < t)) ++rank;
        }
        for (std::size_t c = 0; c < nk; ++c) {
          if (rank < ks[c]) ++hits[n][c];
        }
      }
    }
    for (const auto& x : row) exclude[x.item] = false;
  }

  AttackMetrics m;
  m.ks = ks;
  m.mean_hr.assign(nk, 0.0);
  std::size_t defined = 0;
  for (std::size_t n = 0; n < targets.size(); ++n) {
    TargetHitRatio t{train.item_id(targets[n]), pool[n], {}};
    if (pool[n] > 0) {
      ++defined;
      for (std::size_t c = 0; c < nk; ++c) {
        t.hr.push_back(static_cast<double>(hits[n][c]) / static_cast<double>(pool[n]));
        m.mean_hr[c] += t.hr[c];
      }
    }
    m.targets.push_back(std::move(t));
  }
  if (defined == 0) throw MetricError("every target has an empty evaluation pool");
  for (double& v : m.mean_hr) v /= static_cast<double>(defined);
  for (std::size_t c = 1; c < nk; ++c) {
    if (m.mean_hr[c] < m.mean_hr[c - 1]) throw MetricError("HR@k decreased in k");
  }
  return m;
}

void to_json(nlohmann::json& j, const AttackMetrics& m) {
  nlohmann::json hr = nlohmann::json::object();
  for (std::size_t c = 0; c < m.ks.size(); ++c) hr[std::to_string(m.ks[c])] = m.mean_hr[c];
  nlohmann::json targets = nlohmann::json::array();
  for (const auto& t : m.targets) {
    nlohmann::json per_k = nullptr;
    if (!t.hr.empty()) {
      per_k = nlohmann::json::object();
      for (std::size_t c = 0; c < m.ks.size(); ++c) per_k[std::to_string(m.ks[c])] = t.hr[c];
    }
    targets.push_back({{"item_id", t.item_id}, {"pool_size", t.pool_size}, {"hr", per_k}});
  }
  j = {{"ks", m.ks}, {"hr", hr}, {"targets", targets}};
}

void from_json(const nlohmann::json& j, AttackMetrics& m) {
  m = {};
  m.ks = j.at("ks").get<std::vector<std::size_t>>();
  for (std::size_t k : m.ks) m.mean_hr.push_back(j.at("hr").at(std::to_string(k)).get<double>());
  for (const auto& t : j.at("targets")) {
    TargetHitRatio out{t.at("item_id").get<std::string>(), t.at("pool_size").get<std::size_t>(), {}};
    if (!t.at("hr").is_null()) {
      for (std::size_t k : m.ks) out.hr.push_back(t.at("hr").at(std::to_string(k)).get<double>());
    }
    m.targets.push_back(std::move(out));
  }
}

// ---------------------------------------------------------------------------
// Detection metrics

DetectionMetrics detection_metrics(const std::vector<bool>& predicted_fake,
                                   const std::vector<bool>& truth_fake) {
  if (predicted_fake.size() != truth_fake.size()) {
    throw MetricError("predictions and labels cover different user counts");
  }
  std::size_t ff = 0, fr = 0, rf = 0, rr = 0;  // (predicted, truth)
  for (std::size_t n = 0; n < truth_fake.size(); ++n) {
    const bool p = predicted_fake[n];
    const bool t = truth_fake[n];
    if (p && t) ++ff;
    else if (p) ++fr;
    else if (t) ++rf;
    else ++rr;
  }
  DetectionMetrics m;
  m.fake_data = class_metrics(ff, fr, rf, rr);
  m.true_data = class_metrics(rr, rf, fr, ff);
  return m;
}

DetectionMetrics detection_metrics(const DetectionResult& result, const Dataset& truth) {
  if (result.users.size() != truth.n_users()) {
    throw MetricError("detection result covers " + std::to_string(result.users.size()) +
                      " users but the labels cover " + std::to_string(truth.n_users()));
  }
  std::vector<bool> predicted(truth.n_users(), false);
  std::vector<bool> seen(truth.n_users(), false);
  for (const auto& v : result.users) {
    const auto u = truth.find_user(v.user_id);
    if (!u) throw MetricError("user '" + v.user_id + "' is not in the labeled dataset");
    if (seen[*u]) throw MetricError("user '" + v.user_id + "' appears twice");
    seen[*u] = true;
    predicted[*u] = v.fake;
  }
  std::vector<bool> actual(truth.n_users());
  for (Index u = 0; u < truth.n_users(); ++u) actual[u] = truth.provenance(u) == Provenance::kFake;
  return detection_metrics(predicted, actual);
}

namespace {

nlohmann::json class_to_json(const ClassMetrics& c) {
  return {{"precision", c.precision}, {"recall", c.recall}, {"f1", c.f1},
          {"tp", c.tp},               {"fp", c.fp},         {"fn", c.fn},
          {"tn", c.tn}};
}

ClassMetrics class_from_json(const nlohmann::json& j) {
  ClassMetrics c;
  c.precision = j.at("precision").get<double>();
  c.recall = j.at("recall").get<double>();
  c.f1 = j.at("f1").get<double>();
  c.tp = j.at("tp").get<std::size_t>();
  c.fp = j.at("fp").get<std::size_t>();
  c.fn = j.at("fn").get<std::size_t>();
  c.tn = j.at("tn").get<std::size_t>();
  return c;
}

}  // namespace

void to_json(nlohmann::json& j, const DetectionMetrics& m) {
  j = {{"true_data", class_to_json(m.true_data)}, {"fake_data", class_to_json(m.fake_data)}};
}

void from_json(const nlohmann::json& j, DetectionMetrics& m) {
  m.true_data = class_from_json(j.at("true_data"));
  m.fake_data = class_from_json(j.at("fake_data"));
}

// ---------------------------------------------------------------------------
// Report document

const StageReport* WorkflowReport::stage(const std::string& name) const {
  for (const auto& s : stages) {
    if (s.name == name) return &s;
  }
  return nullptr;
}

bool WorkflowReport::operator==(const WorkflowReport& o) const {
  return report_document(*this) == report_document(o);
}

nlohmann::json report_document(const WorkflowReport& r) {
  nlohmann::json stages = nlohmann::json::array();
  for (const auto& s : r.stages) {
    nlohmann::json j = {{"name", s.name},
                        {"held_out", s.held_out},
                        {"epoch_losses", s.epoch_losses},
                        {"details", s.details}};
    j["attack_metrics"] = s.attack_metrics ? nlohmann::json(*s.attack_metrics) : nlohmann::json();
    j["detection_metrics"] =
        s.detection_metrics ? nlohmann::json(*s.detection_metrics) : nlohmann::json();
    stages.push_back(std::move(j));
  }
  nlohmann::json doc = {{"format", "shillbench-report-v1"},
                        {"status", r.status},
                        {"config", r.config},
                        {"seeds", r.seeds},
                        {"components", r.components},
                        {"protocol", r.protocol},
                        {"stages", stages},
                        {"log_path", r.log_path}};
  doc["detection"] = r.detection ? detection_to_json(*r.detection) : nlohmann::json();
  doc["failed_stage"] = r.failed_stage ? nlohmann::json(*r.failed_stage) : nlohmann::json();
  doc["error"] = r.error ? nlohmann::json(*r.error) : nlohmann::json();
  return doc;
}

WorkflowReport report_from_document(const nlohmann::json& j) {
  try {
    if (j.at("format") != "shillbench-report-v1") throw MetricError("unknown report format");
    WorkflowReport r;
    r.status = j.at("status").get<std::string>();
    r.config = j.at("config");
    r.seeds = j.at("seeds").get<std::map<std::string, std::uint64_t>>();
    r.components = j.at("components");
    r.protocol = j.at("protocol");
    r.log_path = j.at("log_path").get<std::string>();
    for (const auto& s : j.at("stages")) {
      StageReport out;
      out.name = s.at("name").get<std::string>();
      out.held_out = s.at("held_out").get<std::map<std::string, double>>();
      out.epoch_losses = s.at("epoch_losses").get<std::vector<double>>();
      out.details = s.at("details");
      if (!s.at("attack_metrics").is_null()) out.attack_metrics = s.at("attack_metrics").get<AttackMetrics>();
      if (!s.at("detection_metrics").is_null()) {
        out.detection_metrics = s.at("detection_metrics").get<DetectionMetrics>();
      }
      r.stages.push_back(std::move(out));
    }
    if (!j.at("detection").is_null()) r.detection = detection_from_json(j.at("detection"));
    if (!j.at("failed_stage").is_null()) r.failed_stage = j.at("failed_stage").get<std::string>();
    if (!j.at("error").is_null()) r.error = j.at("error").get<std::string>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw MetricError(std::string("malformed report document: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Files

ReportFiles write_report(const WorkflowReport& r, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw MetricError(dir.string() + ": " + ec.message());

  ReportFiles files;
  files.report = dir / "report.json";
  write_text(files.report, report_document(r).dump(2) + "\n");
  files.timings = dir / "timings.json";
  write_text(files.timings, nlohmann::json(r.timings).dump(2) + "\n");

  // Table 2 layout: one row per evaluated stage, one column per k.
  std::vector<std::size_t> ks;
  for (const auto& s : r.stages) {
    if (s.attack_metrics) {
      ks = s.attack_metrics->ks;
      break;
    }
  }
  const std::string attacker =
      r.config.contains("attacker") && r.config["attacker"].is_object()
          ? r.config["attacker"].value("name", "none")
          : "none";
  std::ostringstream hr;
  hr << "attacker,stage";
  for (std::size_t k : ks) hr << ",HR@" << k;
  hr << '\n';
  std::ostringstream per_target;
  per_target << "stage,item_id,pool_size";
  for (std::size_t k : ks) per_target << ",HR@" << k;
  per_target << '\n';
  std::ostringstream losses;
  losses << "stage,epoch,loss\n";
  for (const auto& s : r.stages) {
    for (std::size_t e = 0; e < s.epoch_losses.size(); ++e) {
      losses << s.name << ',' << e + 1 << ',' << fmt(s.epoch_losses[e]) << '\n';
    }
    if (!s.attack_metrics) continue;
    hr << attacker << ',' << s.name;
    for (double v : s.attack_metrics->mean_hr) hr << ',' << fmt(v);
    hr << '\n';
    for (const auto& t : s.attack_metrics->targets) {
      per_target << s.name << ',' << t.item_id << ',' << t.pool_size;
      for (std::size_t c = 0; c < ks.size(); ++c) {
        per_target << ',' << (t.hr.empty() ? std::string() : fmt(t.hr[c]));
      }
      per_target << '\n';
    }
  }
  files.tables.push_back(dir / "attack_metrics.csv");
  write_text(files.tables.back(), hr.str());
  files.tables.push_back(dir / "attack_targets.csv");
  write_text(files.tables.back(), per_target.str());
  files.tables.push_back(dir / "epoch_losses.csv");
  write_text(files.tables.back(), losses.str());

  if (r.detection) {
    // Table 3 layout: detector x class.
    std::ostringstream det;
    det << "detector,class,precision,recall,f1,tp,fp,fn,tn\n";
    for (const auto& s : r.stages) {
      if (!s.detection_metrics) continue;
      auto row = [&](const char* cls, const ClassMetrics& c) {
        det << r.detection->detector << ',' << cls << ',' << fmt(c.precision) << ','
            << fmt(c.recall) << ',' << fmt(c.f1) << ',' << c.tp << ',' << c.fp << ',' << c.fn
            << ',' << c.tn << '\n';
      };
      row("True Data", s.detection_metrics->true_data);
      row("Fake Data", s.detection_metrics->fake_data);
    }
    files.tables.push_back(dir / "detection_metrics.csv");
    write_text(files.tables.back(), det.str());

    std::ostringstream scores;
    scores << "user_id,score,label,provenance_truth\n";
    for (const auto& v : r.detection->users) {
      scores << v.user_id << ',' << fmt(v.score) << ',' << (v.fake ? "fake" : "real") << ','
             << (is_reserved_fake_id(v.user_id) ? "fake" : "real") << '\n';
    }
    files.tables.push_back(dir / "detection_scores.csv");
    write_text(files.tables.back(), scores.str());
  }
  return files;
}

WorkflowReport read_report(const std::filesystem::path& path) {
  const auto doc_path = std::filesystem::is_directory(path) ? path / "report.json" : path;
  std::ifstream in(doc_path);
  if (!in) throw MetricError(doc_path.string() + ": cannot open report");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw MetricError(doc_path.string() + ": " + e.what());
  }
  WorkflowReport r = report_from_document(doc);
  std::ifstream timings(doc_path.parent_path() / "timings.json");
  if (timings) {
    try {
      nlohmann::json t;
      timings >> t;
      r.timings = t.get<std::map<std::string, double>>();
    } catch (const nlohmann::json::exception&) {
      // Timings are advisory; a damaged file leaves them empty.
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// Comparison

namespace {

std::vector<std::string> report_targets(const WorkflowReport& r) {
  for (const auto& s : r.stages) {
    if (s.attack_metrics) {
      std::vector<std::string> ids;
      for (const auto& t : s.attack_metrics->targets) ids.push_back(t.item_id);
      return ids;
    }
  }
  return {};
}

std::vector<DeltaRow> diff(const std::string& label, const AttackMetrics& a,
                           const AttackMetrics& b) {
  if (a.ks != b.ks) throw MetricError("stage '" + label + "': eval_ks differ");
  if (a.targets.size() != b.targets.size()) {
    throw MetricError("stage '" + label + "': target items differ");
  }
  for (std::size_t n = 0; n < a.targets.size(); ++n) {
    if (a.targets[n].item_id != b.targets[n].item_id) {
      throw MetricError("stage '" + label + "': target items differ");
    }
  }
  std::vector<DeltaRow> rows;
  for (std::size_t c = 0; c < a.ks.size(); ++c) {
    rows.push_back({label, a.ks[c], a.mean_hr[c], b.mean_hr[c], b.mean_hr[c] - a.mean_hr[c]});
  }
  return rows;
}

}  // namespace

std::vector<DeltaRow> compare_runs(const WorkflowReport& a, const WorkflowReport& b) {
  if (report_targets(a) != report_targets(b)) {
    throw MetricError("incompatible reports: target items differ");
  }
  std::vector<DeltaRow> rows;
  bool matched = false;
  for (const auto& sa : a.stages) {
    const StageReport* sb = b.stage(sa.name);
    if (!sb || !sa.attack_metrics || !sb->attack_metrics) continue;
    matched = true;
    auto more = diff(sa.name, *sa.attack_metrics, *sb->attack_metrics);
    rows.insert(rows.end(), more.begin(), more.end());
  }
  if (!matched) throw MetricError("incompatible reports: no evaluated stage in common");
  return rows;
}

std::vector<DeltaRow> compare_stages(const WorkflowReport& r, const std::string& before,
                                     const std::string& after) {
  const StageReport* a = r.stage(before);
  const StageReport* b = r.stage(after);
  if (!a || !a->attack_metrics) throw MetricError("stage '" + before + "' has no attack metrics");
  if (!b || !b->attack_metrics) throw MetricError("stage '" + after + "' has no attack metrics");
  return diff(before + "->" + after, *a->attack_metrics, *b->attack_metrics);
}

std::string render_deltas(const std::vector<DeltaRow>& rows) {
  std::ostringstream out;
  out << "stage,k,hr_a,hr_b,delta\n";
  for (const auto& r : rows) {
    out << r.stage << ',' << r.k << ',' << fmt(r.hr_a) << ',' << fmt(r.hr_b) << ','
        << fmt(r.delta) << '\n';
  }
  return out.str();
}

}  // namespace shillbench
