#include "fairaudit/synth.hpp"

#include <algorithm>
#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <numeric>
#include <set>

#include "fairaudit/common.hpp"

namespace fairaudit {

using nlohmann::json;

SynthSpec::SynthSpec() {
  hourly_profile = {0,   0,   0,   0,   0,   0.2, 0.5, 1.0, 1.2, 1.0, 1.0, 1.2,
                    1.5, 1.2, 1.0, 1.0, 1.2, 1.5, 1.5, 1.2, 0.8, 0.5, 0.3, 0.1};
}

namespace {

bool is_probability(double p) { return p >= 0.0 && p <= 1.0; }

void check_group(const SynthGroup& g, const char* name) {
  const std::string prefix = std::string("synth.") + name + ".";
  if (!is_probability(g.base_rate)) throw ConfigError(prefix + "base_rate must be in [0, 1]");
  if (!(g.mean_daily_steps > 0.0)) throw ConfigError(prefix + "mean_daily_steps must be positive");
  if (!(g.dispersion > 0.0)) throw ConfigError(prefix + "dispersion must be positive");
  for (double p : g.source_ownership) {
    if (!is_probability(p)) throw ConfigError(prefix + "source_ownership must be in [0, 1]");
  }
}

bool same_group(const SynthGroup& a, const SynthGroup& b) {
  return a.base_rate == b.base_rate && a.mean_daily_steps == b.mean_daily_steps &&
         a.dispersion == b.dispersion && a.source_ownership == b.source_ownership;
}

double lookup(const std::map<Attribute, double>& m, Attribute a, double fallback) {
  const auto it = m.find(a);
  return it == m.end() ? fallback : it->second;
}

double round1(double x) { return std::round(x * 10.0) / 10.0; }

constexpr std::array<Ethnicity, 6> kMinorityEthnicities = {
    Ethnicity::kAsian,          Ethnicity::kBlack,          Ethnicity::kHispanic,
    Ethnicity::kAmericanIndian, Ethnicity::kPacificIslander, Ethnicity::kOther};

constexpr std::array<std::array<const char*, 2>, 3> kDeviceModels = {{
    {"iPhone 6", "iPhone 8"},
    {"Watch S2", "Watch S4"},
    {"Fitbit Charge", "Garmin Vivo"},
}};

RawAttributeProfile draw_profile(const SynthSpec& spec, const std::string& id, Rng& rng,
                                 std::optional<bool> forced_target) {
  RawAttributeProfile p;
  p.user_id = id;
  for (const Attribute a : kAllAttributes) {
    // Both draws always happen so one attribute's settings never shift another's.
    const bool missing = rng.bernoulli(lookup(spec.missing_probability, a, 0.0));
    bool minority = rng.bernoulli(lookup(spec.minority_probability, a, 0.5));
    if (a == spec.target && forced_target) minority = *forced_target;
    const double u = rng.uniform();
    const double v = rng.uniform();
    auto condition = [&] {
      return missing ? Condition::kNA : minority ? Condition::kYes : Condition::kNo;
    };
    switch (a) {
      case Attribute::kGender:
        p.gender = missing ? Gender::kNA : minority ? Gender::kFemale : Gender::kMale;
        break;
      case Attribute::kEthnicity:
        p.ethnicity = missing    ? Ethnicity::kNA
                      : minority ? kMinorityEthnicities[static_cast<std::size_t>(u * 6.0)]
                                 : Ethnicity::kWhite;
        break;
      case Attribute::kAge:
        if (!missing) p.age = minority ? 65 + static_cast<int>(u * 21.0) : 18 + static_cast<int>(u * 47.0);
        break;
      case Attribute::kBmi: {
        if (missing) break;
        const double height = round1(150.0 + 40.0 * u);
        double bmi;
        if (minority) {
          bmi = 19.0 + 5.5 * v;
        } else {
          bmi = v < 0.5 ? 15.0 + 6.0 * v : 26.0 + 18.0 * (v - 0.5);
        }
        p.height_cm = height;
        p.weight_kg = round1(bmi * height * height / 10000.0);
        break;
      }
      case Attribute::kHeartCondition:
        p.heart_condition = condition();
        break;
      case Attribute::kHypertension:
        p.hypertension = condition();
        break;
      case Attribute::kJointProblem:
        p.joint_problem = condition();
        break;
      case Attribute::kDiabetes:
        p.diabetes = condition();
        break;
    }
  }
  return p;
}

// Log-normal with the given mean, conditioned on lying above (or below) t.
double truncated_lognormal(Rng& rng, double mean, double sigma, double t, bool above) {
  static const boost::math::normal standard;
  const double mu = std::log(mean) - 0.5 * sigma * sigma;
  const double f = boost::math::cdf(standard, (std::log(t) - mu) / sigma);
  const double u = rng.uniform();
  double q = above ? f + (1.0 - f) * u : f * u;
  q = std::clamp(q, 1e-15, 1.0 - 1e-15);
  return std::exp(mu + sigma * boost::math::quantile(standard, q));
}

// Largest-remainder split of `total` over the weights; ties go to the earlier hour.
std::array<std::int64_t, 24> allocate(std::int64_t total, const std::array<double, 24>& w) {
  const double sum = std::accumulate(w.begin(), w.end(), 0.0);
  std::array<std::int64_t, 24> out{};
  std::array<double, 24> rem{};
  std::int64_t used = 0;
  for (std::size_t h = 0; h < 24; ++h) {
    const double exact = static_cast<double>(total) * w[h] / sum;
    out[h] = static_cast<std::int64_t>(std::floor(exact));
    rem[h] = exact - static_cast<double>(out[h]);
    used += out[h];
  }
  std::array<std::size_t, 24> order{};
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return rem[a] > rem[b]; });
  for (std::size_t k = 0; used < total; k = (k + 1) % 24) {
    if (w[order[k]] > 0.0) {
      ++out[order[k]];
      ++used;
    }
  }
  return out;
}

std::string user_id(int index, int n) {
  const int width = std::max(4, static_cast<int>(std::to_string(std::max(n - 1, 0)).size()));
  auto digits = std::to_string(index);
  if (static_cast<int>(digits.size()) < width) digits.insert(0, static_cast<std::size_t>(width) - digits.size(), '0');
  return "u" + digits;
}

std::string source_key(Source s) { return std::string(source_name(s)); }

}  // namespace

void SynthSpec::validate() const {
  if (n_users < 0) throw ConfigError("synth.n_users must be >= 0");
  if (n_days < 1) throw ConfigError("synth.n_days must be >= 1");
  if (target_minority_users && (*target_minority_users < 0 || *target_minority_users > n_users)) {
    throw ConfigError("synth.target_minority_users must be in [0, n_users]");
  }
  for (const auto& [a, p] : minority_probability) {
    if (!is_probability(p)) throw ConfigError("synth.minority_probability must be in [0, 1]");
  }
  for (const auto& [a, p] : missing_probability) {
    if (!is_probability(p)) throw ConfigError("synth.missing_probability must be in [0, 1]");
  }
  check_group(g0, "g0");
  check_group(g1, "g1");
  if (!is_probability(persistence)) throw ConfigError("synth.persistence must be in [0, 1]");
  if (!(threshold > 0.0)) throw ConfigError("synth.threshold must be positive");
  double total = 0.0;
  for (double w : hourly_profile) {
    if (!(w >= 0.0)) throw ConfigError("synth.hourly_profile weights must be >= 0");
    total += w;
  }
  if (!(total > 0.0)) throw ConfigError("synth.hourly_profile must not be all zero");
  for (const auto& s : skew) {
    if (!(s.factor > 0.0)) throw ConfigError("synth.skew factor must be positive");
    if (!(s.noise >= 0.0)) throw ConfigError("synth.skew noise must be >= 0");
  }
  try {
    parse_timestamp(start_date + "T00");
  } catch (const DataError& e) {
    throw ConfigError(std::string("synth.start_date: ") + e.what());
  }
}

namespace {

json group_json(const SynthGroup& g) {
  return {{"base_rate", g.base_rate},
          {"mean_daily_steps", g.mean_daily_steps},
          {"dispersion", g.dispersion},
          {"source_ownership",
           {{"phone", g.source_ownership[0]},
            {"watch", g.source_ownership[1]},
            {"third_party", g.source_ownership[2]}}}};
}

SynthGroup group_from(const json& j, SynthGroup g) {
  g.base_rate = j.value("base_rate", g.base_rate);
  g.mean_daily_steps = j.value("mean_daily_steps", g.mean_daily_steps);
  g.dispersion = j.value("dispersion", g.dispersion);
  if (j.contains("source_ownership")) {
    for (const auto& [name, p] : j.at("source_ownership").items()) {
      g.source_ownership[static_cast<std::size_t>(parse_source(name))] = p.get<double>();
    }
  }
  return g;
}

json attribute_map(const std::map<Attribute, double>& m) {
  json out = json::object();
  for (const auto& [a, p] : m) out[std::string(attribute_name(a))] = p;
  return out;
}

std::map<Attribute, double> attribute_map_from(const json& j) {
  std::map<Attribute, double> out;
  for (const auto& [name, p] : j.items()) out[parse_attribute(name)] = p.get<double>();
  return out;
}

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

void to_json(json& j, const SynthSpec& s) {
  json skew = json::object();
  for (const auto src : kAllSources) {
    const auto& k = s.skew[static_cast<std::size_t>(src)];
    skew[source_key(src)] = {{"factor", k.factor}, {"noise", k.noise}};
  }
  j = json{{"n_users", s.n_users},
           {"n_days", s.n_days},
           {"seed", s.seed},
           {"target", attribute_name(s.target)},
           {"target_minority_users",
            s.target_minority_users ? json(*s.target_minority_users) : json(nullptr)},
           {"minority_probability", attribute_map(s.minority_probability)},
           {"missing_probability", attribute_map(s.missing_probability)},
           {"g0", group_json(s.g0)},
           {"g1", group_json(s.g1)},
           {"persistence", s.persistence},
           {"threshold", s.threshold},
           {"hourly_profile", s.hourly_profile},
           {"skew", skew},
           {"start_date", s.start_date}};
}

void from_json(const json& j, SynthSpec& s) {
  if (!j.is_object()) throw ConfigError("synth spec must be an object");
  static const std::set<std::string> known = {
      "n_users", "n_days", "seed", "target", "minority_probability", "missing_probability",
      "target_minority_users", "g0", "g1", "persistence", "threshold", "hourly_profile",
      "skew", "start_date"};
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw ConfigError("synth spec: unknown option '" + key + "'");
  }
  try {
    s.n_users = j.value("n_users", s.n_users);
    s.n_days = j.value("n_days", s.n_days);
    s.seed = j.value("seed", s.seed);
    if (j.contains("target_minority_users") && !j.at("target_minority_users").is_null()) {
      s.target_minority_users = j.at("target_minority_users").get<int>();
    }
    if (j.contains("target")) s.target = parse_attribute(j.at("target").get<std::string>());
    if (j.contains("minority_probability")) {
      s.minority_probability = attribute_map_from(j.at("minority_probability"));
    }
    if (j.contains("missing_probability")) {
      s.missing_probability = attribute_map_from(j.at("missing_probability"));
    }
    if (j.contains("g0")) s.g0 = group_from(j.at("g0"), s.g0);
    if (j.contains("g1")) s.g1 = group_from(j.at("g1"), s.g1);
    s.persistence = j.value("persistence", s.persistence);
    s.threshold = j.value("threshold", s.threshold);
    if (j.contains("hourly_profile")) {
      const auto w = j.at("hourly_profile").get<std::vector<double>>();
      if (w.size() != 24) throw ConfigError("synth.hourly_profile needs 24 weights");
      std::copy(w.begin(), w.end(), s.hourly_profile.begin());
    }
    if (j.contains("skew")) {
      for (const auto& [name, k] : j.at("skew").items()) {
        auto& target = s.skew[static_cast<std::size_t>(parse_source(name))];
        target.factor = k.value("factor", target.factor);
        target.noise = k.value("noise", target.noise);
      }
    }
    s.start_date = j.value("start_date", s.start_date);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("synth spec: ") + e.what());
  } catch (const DataError& e) {
    throw ConfigError(std::string("synth spec: ") + e.what());
  }
  s.validate();
}

json to_json(const GroundTruth& truth) {
  json attrs = json::array();
  for (const auto& a : truth.attributes) {
    json sources = json::object();
    for (const auto src : kAllSources) {
      const auto i = static_cast<std::size_t>(src);
      sources[source_key(src)] = {{"users_g0", a.source_users_g0[i]},
                                  {"users_g1", a.source_users_g1[i]}};
    }
    attrs.push_back({{"attribute", attribute_name(a.attribute)},
                     {"minority_users", a.minority_users},
                     {"majority_users", a.majority_users},
                     {"dataset_ratio", optional_number(a.dataset_ratio)},
                     {"windows_g0", a.windows_g0},
                     {"windows_g1", a.windows_g1},
                     {"positives_g0", a.positives_g0},
                     {"positives_g1", a.positives_g1},
                     {"base_rate_g0", optional_number(a.base_rate_g0)},
                     {"base_rate_g1", optional_number(a.base_rate_g1)},
                     {"base_rate_dir", optional_number(a.base_rate_dir)},
                     {"source_users", sources}});
  }
  return {{"seed", truth.seed},         {"threshold", truth.threshold},
          {"users", truth.users},       {"records", truth.records},
          {"windows", truth.windows},   {"attributes", attrs},
          {"warnings", truth.warnings}};
}

GroundTruth tally_ground_truth(std::span<const StepRecord> records,
                               std::span<const RawAttributeProfile> profiles,
                               double threshold) {
  GroundTruth truth;
  truth.threshold = threshold;
  truth.users = static_cast<std::int64_t>(profiles.size());
  truth.records = static_cast<std::int64_t>(records.size());
  std::vector<BinarizedProfile> binarized;
  binarized.reserve(profiles.size());
  for (const auto& p : profiles) binarized.push_back(binarize(p));
  const auto windows = build_windows(records, FixedThreshold{threshold});
  truth.windows = static_cast<std::int64_t>(windows.size());

  std::map<std::string, std::set<Source>, std::less<>> sources;
  for (const auto& r : records) sources[r.user_id].insert(r.source);

  for (const Attribute a : kAllAttributes) {
    AttributeTruth t;
    t.attribute = a;
    const auto part = partition(binarized, a);
    t.minority_users = static_cast<std::int64_t>(part.g0_users.size());
    t.majority_users = static_cast<std::int64_t>(part.g1_users.size());
    if (t.majority_users > 0) {
      t.dataset_ratio = static_cast<double>(t.minority_users) / static_cast<double>(t.majority_users);
    }
    for (const auto& w : windows) {
      const auto g = part.group_of(w.user_id);
      if (!g) continue;
      const bool g0 = *g == Group::kG0;
      (g0 ? t.windows_g0 : t.windows_g1) += 1;
      if (w.positive()) (g0 ? t.positives_g0 : t.positives_g1) += 1;
    }
    if (t.windows_g0 > 0) t.base_rate_g0 = static_cast<double>(t.positives_g0) / static_cast<double>(t.windows_g0);
    if (t.windows_g1 > 0) t.base_rate_g1 = static_cast<double>(t.positives_g1) / static_cast<double>(t.windows_g1);
    if (t.windows_g0 > 0 && t.positives_g1 > 0) {
      // one division of the exact integer cross-products
      t.base_rate_dir = static_cast<double>(t.positives_g0 * t.windows_g1) /
                        static_cast<double>(t.positives_g1 * t.windows_g0);
    }
    for (const auto& [user, owned] : sources) {
      const auto g = part.group_of(user);
      if (!g) continue;
      auto& counts = *g == Group::kG0 ? t.source_users_g0 : t.source_users_g1;
      for (const auto s : owned) counts[static_cast<std::size_t>(s)] += 1;
    }
    truth.attributes.push_back(t);
  }
  return truth;
}

std::vector<StepRecord> inject_measurement_skew(std::span<const StepRecord> records,
                                                Source source, double factor, double noise,
                                                std::uint64_t seed) {
  if (!(factor > 0.0)) throw ConfigError("skew factor must be positive");
  if (!(noise >= 0.0)) throw ConfigError("skew noise must be >= 0");
  std::vector<StepRecord> out(records.begin(), records.end());
  Rng rng(seed);
  for (auto& r : out) {
    if (r.source != source) continue;
    const double multiplier = noise > 0.0 ? std::max(0.0, 1.0 + noise * rng.normal()) : 1.0;
    r.steps = std::llround(factor * static_cast<double>(r.steps) * multiplier);
  }
  return out;
}

SynthCorpus generate(const SynthSpec& spec) {
  spec.validate();
  SynthCorpus corpus;
  const HourStamp first_day = day_of(parse_timestamp(spec.start_date + "T00"));
  const auto weight_peak = static_cast<std::size_t>(
      std::max_element(spec.hourly_profile.begin(), spec.hourly_profile.end()) -
      spec.hourly_profile.begin());

  std::vector<char> forced;
  if (spec.target_minority_users) {
    forced.assign(static_cast<std::size_t>(spec.n_users), 0);
    std::fill_n(forced.begin(), *spec.target_minority_users, 1);
    Rng order(derive_seed(spec.seed, 2'000'000));
    order.shuffle(forced);
  }
  for (int i = 0; i < spec.n_users; ++i) {
    Rng rng(derive_seed(spec.seed, static_cast<std::uint64_t>(i)));
    const auto id = user_id(i, spec.n_users);
    std::optional<bool> target_flag;
    if (!forced.empty()) target_flag = forced[static_cast<std::size_t>(i)] != 0;
    auto profile = draw_profile(spec, id, rng, target_flag);
    const auto group = binarize(profile)[spec.target];
    const SynthGroup& params = group == GroupLabel::kMinority ? spec.g0 : spec.g1;
    corpus.profiles.push_back(std::move(profile));

    const double p = params.base_rate;

    std::vector<Source> owned;
    std::array<std::string, 3> models;
    for (const auto s : kAllSources) {
      const auto k = static_cast<std::size_t>(s);
      const bool has = rng.bernoulli(params.source_ownership[k]);
      models[k] = kDeviceModels[k][rng.below(2)];
      if (has) owned.push_back(s);
    }
    if (owned.empty()) {
      const auto best = std::max_element(params.source_ownership.begin(),
                                         params.source_ownership.end()) -
                        params.source_ownership.begin();
      owned.push_back(kAllSources[static_cast<std::size_t>(best)]);
    }

    // Two-state chain with stationary rate p and lag-one autocorrelation rho.
    bool high = false;
    for (int d = 0; d < spec.n_days; ++d) {
      const double chance =
          d == 0 ? p : p + spec.persistence * ((high ? 1.0 : 0.0) - p);
      high = rng.bernoulli(chance);
      const double x = truncated_lognormal(rng, params.mean_daily_steps, params.dispersion,
                                           spec.threshold, high);
      const auto floor_high = static_cast<std::int64_t>(std::ceil(spec.threshold));
      const std::int64_t total =
          high ? std::max(static_cast<std::int64_t>(std::ceil(x)), floor_high)
               : std::clamp(static_cast<std::int64_t>(std::floor(x)), std::int64_t{0}, floor_high - 1);
      const Source src = owned[rng.below(owned.size())];
      const auto hours = allocate(total, spec.hourly_profile);
      const HourStamp day_start = (first_day + d) * 24;
      bool any = false;
      for (std::size_t h = 0; h < 24; ++h) {
        if (hours[h] == 0) continue;
        corpus.records.push_back({id, day_start + static_cast<HourStamp>(h), hours[h], src,
                                  models[static_cast<std::size_t>(src)]});
        any = true;
      }
      // keep the day observed even when nothing was walked
      if (!any) {
        corpus.records.push_back({id, day_start + static_cast<HourStamp>(weight_peak), 0, src,
                                  models[static_cast<std::size_t>(src)]});
      }
    }
  }

  for (const auto s : kAllSources) {
    const auto& k = spec.skew[static_cast<std::size_t>(s)];
    if (k.factor == 1.0 && k.noise == 0.0) continue;
    corpus.records = inject_measurement_skew(corpus.records, s, k.factor, k.noise,
                                             derive_seed(spec.seed, 1'000'000 + static_cast<std::uint64_t>(s)));
  }

  corpus.truth = tally_ground_truth(corpus.records, corpus.profiles, spec.threshold);
  corpus.truth.seed = spec.seed;
  if (!same_group(spec.g0, spec.g1)) {
    const auto& t = corpus.truth.attributes[static_cast<std::size_t>(spec.target)];
    if (t.minority_users == 0 || t.majority_users == 0) {
      corpus.truth.warnings.push_back(std::string("group parameters differ but a ") +
                                      std::string(attribute_name(spec.target)) +
                                      " group is empty");
    }
  }
  return corpus;
}

}  // namespace fairaudit
