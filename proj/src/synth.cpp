#include "leakwatch/synth.hpp"

#include "leakwatch/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

namespace leakwatch {

void ScenarioSpec::validate() const {
    if (sensors < 2)
        throw ValidationError("scenario: need at least 2 sensors");
    if (step <= 0 || samples < 1)
        throw ValidationError("scenario: step must be > 0 and samples >= 1");
    if (demands.count < 0 || demands.known_count < 0 || demands.known_count > demands.count)
        throw ValidationError("scenario: bad demand channel counts");
    if (demands.count > 0 &&
        (demands.duty_min <= 0 || demands.duty_max > 1 || demands.duty_min > demands.duty_max ||
         demands.cycle_hours_min <= 0 || demands.cycle_hours_min > demands.cycle_hours_max))
        throw ValidationError("scenario: bad demand duty cycle");
    if (noise_sigma < 0)
        throw ValidationError("scenario: negative noise sigma");
    for (double s : demands.amp_scales)
        if (!(s >= 0.0))
            throw ValidationError("scenario: demand amplitude scales must be >= 0");
    if (diurnal.residual_amp < 0.0)
        throw ValidationError("scenario: negative diurnal residual amplitude");
    if (leak.type != LeakType::none) {
        const Timestamp end = start + samples * step;
        if (leak.start < start || leak.start >= end)
            throw ValidationError("scenario: leak start outside duration");
        if (leak.max_flow < 0)
            throw ValidationError("scenario: negative leak flow");
        if (leak.type == LeakType::incipient && leak.ramp <= 0)
            throw ValidationError("scenario: incipient leak needs ramp duration > 0");
    }
    if (coefficients) {
        if (coefficients->sensor_count() != sensors)
            throw ValidationError("scenario: explicit coefficients do not cover all sensors");
        if (coefficients->demand_count() != demands.count)
            throw ValidationError("scenario: explicit coefficients do not cover all demands");
        for (Eigen::Index i = 0; i < sensors; ++i)
            if (coefficients->k1[i] == 0.0)
                throw ValidationError("scenario: k1 must be nonzero");
    }
}

namespace {

double uniform(std::mt19937_64& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

Eigen::VectorXd latent_line(const ScenarioSpec& spec, std::mt19937_64& rng) {
    const auto& d = spec.diurnal;
    const double phase24 = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    const double phase12 = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    std::normal_distribution<double> gauss(0.0, 1.0);

    Eigen::VectorXd line(spec.samples);
    double ar1 = 0.0;
    for (std::int64_t t = 0; t < spec.samples; ++t) {
        const double sec = static_cast<double>(t * spec.step);
        ar1 = d.ar1_rho * ar1 + d.ar1_sigma * gauss(rng);
        line[t] = d.base + d.amp_24h * std::sin(2.0 * std::numbers::pi * sec / 86400.0 + phase24) +
                  d.amp_12h * std::sin(2.0 * std::numbers::pi * sec / 43200.0 + phase12) + ar1;
    }
    return line;
}

Eigen::VectorXd demand_channel(const ScenarioSpec& spec, std::mt19937_64& rng) {
    const auto& d = spec.demands;
    std::normal_distribution<double> gauss(0.0, 1.0);
    Eigen::VectorXd raw = Eigen::VectorXd::Zero(spec.samples);

    const double steps_per_hour = 3600.0 / static_cast<double>(spec.step);
    std::int64_t t = 0;
    // random initial phase so channels do not all switch at t = 0
    t += static_cast<std::int64_t>(
        uniform(rng, 0.0, d.cycle_hours_max * steps_per_hour));
    std::int64_t fill_from = 0;
    while (fill_from < spec.samples) {
        const double cycle_hours = uniform(rng, d.cycle_hours_min, d.cycle_hours_max);
        const auto cycle = std::max<std::int64_t>(
            2, static_cast<std::int64_t>(std::lround(cycle_hours * steps_per_hour)));
        const double duty = uniform(rng, d.duty_min, d.duty_max);
        const auto on_len = std::max<std::int64_t>(
            1, static_cast<std::int64_t>(std::lround(duty * static_cast<double>(cycle))));
        const double amp = std::exp(d.amp_log_mu + d.amp_log_sigma * gauss(rng));

        const std::int64_t on_start = t + (cycle - on_len);
        for (std::int64_t k = std::max<std::int64_t>(on_start, 0); k < t + cycle; ++k)
            if (k >= 0 && k < spec.samples)
                raw[k] = amp;
        t += cycle;
        fill_from = t;
    }

    // 3-sample moving average; keeps the pulses but softens the edges
    Eigen::VectorXd smooth(spec.samples);
    for (std::int64_t k = 0; k < spec.samples; ++k) {
        double acc = raw[k];
        int cnt = 1;
        if (k > 0) { acc += raw[k - 1]; ++cnt; }
        if (k + 1 < spec.samples) { acc += raw[k + 1]; ++cnt; }
        smooth[k] = acc / cnt;
    }
    return smooth;
}

Eigen::VectorXd leak_flow_series(const ScenarioSpec& spec) {
    Eigen::VectorXd flow = Eigen::VectorXd::Zero(spec.samples);
    if (spec.leak.type == LeakType::none)
        return flow;
    for (std::int64_t t = 0; t < spec.samples; ++t) {
        const Timestamp now = spec.start + t * spec.step;
        if (now < spec.leak.start)
            continue;
        if (spec.leak.type == LeakType::abrupt) {
            flow[t] = spec.leak.max_flow;
        } else {
            const double frac =
                static_cast<double>(now - spec.leak.start) / static_cast<double>(spec.leak.ramp);
            flow[t] = spec.leak.max_flow * std::min(1.0, frac);
        }
    }
    return flow;
}

} // namespace

ScenarioTruth generate(const ScenarioSpec& spec) {
    spec.validate();
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);

    const Eigen::Index n = spec.sensors;
    const std::int64_t t_len = spec.samples;
    const Eigen::Index d_len = spec.demands.count;

    ScenarioTruth truth;

    // Ground-truth coefficients (drawn first so the stream layout is stable).
    if (spec.coefficients) {
        truth.coeffs = *spec.coefficients;
    } else {
        truth.coeffs.k0.resize(n);
        truth.coeffs.k1.resize(n);
        truth.coeffs.kd.resize(d_len, n);
        for (Eigen::Index i = 0; i < n; ++i) {
            truth.coeffs.k0[i] = uniform(rng, spec.ranges.k0_min, spec.ranges.k0_max);
            truth.coeffs.k1[i] = uniform(rng, spec.ranges.k1_min, spec.ranges.k1_max);
        }
        for (Eigen::Index d = 0; d < d_len; ++d) {
            const Eigen::Index home = d % std::max<Eigen::Index>(1, n - 1);
            for (Eigen::Index i = 0; i < n; ++i)
                truth.coeffs.kd(d, i) =
                    i == home ? uniform(rng, spec.ranges.kd_home_min, spec.ranges.kd_home_max)
                              : uniform(rng, spec.ranges.kd_min, spec.ranges.kd_max);
        }
        truth.coeffs.gauge_sensor = 0;
    }
    if (truth.coeffs.sensor_ids.empty())
        for (Eigen::Index i = 0; i < n; ++i)
            truth.coeffs.sensor_ids.push_back("s" + std::to_string(i + 1));
    if (truth.coeffs.demand_ids.empty())
        for (Eigen::Index d = 0; d < d_len; ++d)
            truth.coeffs.demand_ids.push_back("q" + std::to_string(d + 1));
    truth.coeffs.demand_kinds.assign(static_cast<std::size_t>(d_len), DemandKind::known);
    truth.demand_ids = truth.coeffs.demand_ids;
    truth.known_count = spec.demands.known_count;

    const Eigen::VectorXd line = latent_line(spec, rng);

    truth.irregular_demands.resize(d_len, t_len);
    for (Eigen::Index d = 0; d < d_len; ++d) {
        const double scale =
            d < static_cast<Eigen::Index>(spec.demands.amp_scales.size())
                ? spec.demands.amp_scales[static_cast<std::size_t>(d)]
                : 1.0;
        truth.irregular_demands.row(d) = scale * demand_channel(spec, rng).transpose();
    }

    truth.leak_flow = leak_flow_series(spec);
    if (spec.leak.type != LeakType::none)
        truth.leak_start = spec.leak.start;

    // Leak couplings: heterogeneous across sensors, else the leak cancels
    // pairwise and is invisible to the model. Redraw (deterministically) until
    // both the heterogeneity and the 3-sigma detectability margin hold.
    truth.leak_couplings = Eigen::VectorXd::Zero(n);
    if (spec.leak.type != LeakType::none) {
        const double peak_flow = truth.leak_flow.maxCoeff();
        const double peak_q2 = peak_flow * peak_flow;
        for (int attempt = 0;; ++attempt) {
            if (attempt >= 100)
                throw ValidationError("scenario: no detectable leak coupling after 100 draws");
            for (Eigen::Index i = 0; i < n; ++i)
                truth.leak_couplings[i] =
                    i == n - 1 ? uniform(rng, spec.ranges.leak_home_min,
                                         spec.ranges.leak_home_max)
                               : uniform(rng, spec.ranges.leak_min, spec.ranges.leak_max);
            double max_diff = 0.0;
            double best_margin = -std::numeric_limits<double>::infinity();
            for (Eigen::Index i = 0; i < n; ++i)
                for (Eigen::Index j = 0; j < n; ++j) {
                    if (i == j)
                        continue;
                    const double diff =
                        std::abs(truth.leak_couplings[j] - truth.leak_couplings[i]);
                    max_diff = std::max(max_diff, diff);
                    const double shift = diff * peak_q2 / std::abs(truth.coeffs.k1[i]);
                    const double pair_sigma =
                        spec.noise_sigma *
                        std::sqrt(1.0 + std::pow(truth.coeffs.k1[j] / truth.coeffs.k1[i], 2));
                    // 3.1 instead of 3.0: the acceptance margin is measured on
                    // sample means, so leave room for their standard error
                    best_margin = std::max(best_margin, shift - 3.1 * pair_sigma);
                }
            if (max_diff >= 1e-6 && best_margin >= 0.0)
                break;
            truth.notes.push_back("leak couplings redrawn (attempt " +
                                  std::to_string(attempt + 1) +
                                  "): below heterogeneity/detectability margin");
        }
    }

    // Per-sensor diurnal closure error: one shared daily waveform with
    // heterogeneous weights, so the pairwise model cannot absorb it.
    Eigen::VectorXd residual_weight = Eigen::VectorXd::Zero(n);
    double residual_phase = 0.0;
    if (spec.diurnal.residual_amp > 0.0) {
        residual_phase = uniform(rng, 0.0, 2.0 * std::numbers::pi);
        for (Eigen::Index i = 0; i < n; ++i)
            residual_weight[i] = spec.diurnal.residual_amp * uniform(rng, 0.3, 1.0);
    }

    // Invert the model for the panel.
    truth.panel.axis = TimeAxis{spec.start, spec.step, t_len};
    truth.panel.sensor_ids = truth.coeffs.sensor_ids;
    truth.panel.values.resize(n, t_len);
    const Eigen::MatrixXd q2 = truth.irregular_demands.array().square();
    const Eigen::VectorXd leak_q2 = truth.leak_flow.array().square();
    for (std::int64_t t = 0; t < t_len; ++t) {
        double residual_wave = 0.0;
        if (spec.diurnal.residual_amp > 0.0) {
            const double sec = static_cast<double>(t * spec.step);
            const double s =
                std::sin(2.0 * std::numbers::pi * sec / 86400.0 + residual_phase);
            residual_wave = s > 0.0 ? s * s : 0.0;
        }
        for (Eigen::Index i = 0; i < n; ++i) {
            double load = 0.0;
            for (Eigen::Index d = 0; d < d_len; ++d)
                load += truth.coeffs.kd(d, i) * q2(d, t);
            load += truth.leak_couplings[i] * leak_q2[t];
            double p = (line[t] - truth.coeffs.k0[i] - load) / truth.coeffs.k1[i];
            p += residual_weight[i] * residual_wave;
            if (spec.noise_sigma > 0.0)
                p += spec.noise_sigma * gauss(rng);
            truth.panel.values(i, t) = p;
        }
    }

    for (int d = 0; d < truth.known_count; ++d)
        truth.panel.known_demands.push_back(
            {truth.demand_ids[static_cast<std::size_t>(d)],
             truth.irregular_demands.row(d).transpose()});

    return truth;
}

ScenarioSpec reference_scenario(ReferenceKind kind) {
    ScenarioSpec spec;
    spec.sensors = 3;
    spec.samples = 16128; // 8 weeks
    spec.demands.count = 3;
    spec.demands.known_count = 0;
    spec.demands.amp_scales = {1.0, 1.0, 0.35};
    spec.diurnal.residual_amp = 0.25;
    switch (kind) {
    case ReferenceKind::abrupt:
        spec.leak.type = LeakType::abrupt;
        spec.leak.start = spec.start + 28ll * 86400; // week 5
        spec.leak.max_flow = 5.2;
        break;
    case ReferenceKind::incipient:
        spec.leak.type = LeakType::incipient;
        spec.leak.start = spec.start + 21ll * 86400; // week 4
        spec.leak.max_flow = 7.2;
        spec.leak.ramp = 28ll * 86400; // the ten-week ramp, scaled to fit
        break;
    case ReferenceKind::clean:
        spec.leak.type = LeakType::none;
        break;
    }
    return spec;
}

TimeWindow reference_train_window(const ScenarioSpec& spec) {
    return {spec.start, spec.start + 14ll * 86400};
}

TimeWindow reference_eval_window(const ScenarioSpec& spec) {
    return {spec.start + 14ll * 86400, spec.start + spec.samples * spec.step};
}

namespace {

nlohmann::json leak_json(const LeakSpec& leak) {
    nlohmann::json j;
    switch (leak.type) {
    case LeakType::none: j["type"] = "none"; break;
    case LeakType::abrupt: j["type"] = "abrupt"; break;
    case LeakType::incipient: j["type"] = "incipient"; break;
    }
    if (leak.type != LeakType::none) {
        j["start"] = format_timestamp(leak.start);
        j["max_flow_m3h"] = leak.max_flow;
        if (leak.type == LeakType::incipient)
            j["ramp_s"] = leak.ramp;
    }
    return j;
}

} // namespace

std::string ScenarioSpec::to_json() const {
    nlohmann::json j;
    j["format"] = "leakwatch-scenario-v1";
    j["sensors"] = sensors;
    j["start"] = format_timestamp(start);
    j["step_s"] = step;
    j["samples"] = samples;
    j["seed"] = seed;
    j["noise_sigma"] = noise_sigma;
    j["diurnal"] = {{"base", diurnal.base},
                    {"amp_24h", diurnal.amp_24h},
                    {"amp_12h", diurnal.amp_12h},
                    {"ar1_rho", diurnal.ar1_rho},
                    {"ar1_sigma", diurnal.ar1_sigma},
                    {"residual_amp", diurnal.residual_amp}};
    j["irregular_demands"] = {{"count", demands.count},
                              {"known_count", demands.known_count},
                              {"amp_scales", demands.amp_scales},
                              {"duty", {demands.duty_min, demands.duty_max}},
                              {"cycle_hours", {demands.cycle_hours_min, demands.cycle_hours_max}},
                              {"amp_log_mu", demands.amp_log_mu},
                              {"amp_log_sigma", demands.amp_log_sigma}};
    j["leak"] = leak_json(leak);
    j["coefficient_ranges"] = {{"k0", {ranges.k0_min, ranges.k0_max}},
                               {"k1", {ranges.k1_min, ranges.k1_max}},
                               {"kd", {ranges.kd_min, ranges.kd_max}},
                               {"kd_home", {ranges.kd_home_min, ranges.kd_home_max}},
                               {"leak", {ranges.leak_min, ranges.leak_max}},
                               {"leak_home", {ranges.leak_home_min, ranges.leak_home_max}}};
    if (coefficients)
        j["coefficients"] = nlohmann::json::parse(coefficients->to_json());
    return j.dump(2);
}

ScenarioSpec ScenarioSpec::from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("scenario spec: ") + e.what());
    }
    if (j.value("format", "") != "leakwatch-scenario-v1")
        throw ValidationError("scenario spec: unknown format '" + j.value("format", "") + "'");

    ScenarioSpec spec;
    try {
        spec.sensors = j.value("sensors", spec.sensors);
        if (j.contains("start"))
            spec.start = parse_timestamp(j.at("start").get<std::string>());
        spec.step = j.value("step_s", spec.step);
        spec.samples = j.value("samples", spec.samples);
        spec.seed = j.value("seed", spec.seed);
        spec.noise_sigma = j.value("noise_sigma", spec.noise_sigma);
        if (j.contains("diurnal")) {
            const auto& d = j["diurnal"];
            spec.diurnal.base = d.value("base", spec.diurnal.base);
            spec.diurnal.amp_24h = d.value("amp_24h", spec.diurnal.amp_24h);
            spec.diurnal.amp_12h = d.value("amp_12h", spec.diurnal.amp_12h);
            spec.diurnal.ar1_rho = d.value("ar1_rho", spec.diurnal.ar1_rho);
            spec.diurnal.ar1_sigma = d.value("ar1_sigma", spec.diurnal.ar1_sigma);
            spec.diurnal.residual_amp = d.value("residual_amp", spec.diurnal.residual_amp);
        }
        if (j.contains("irregular_demands")) {
            const auto& d = j["irregular_demands"];
            spec.demands.count = d.value("count", spec.demands.count);
            spec.demands.known_count = d.value("known_count", spec.demands.known_count);
            if (d.contains("duty")) {
                spec.demands.duty_min = d["duty"].at(0).get<double>();
                spec.demands.duty_max = d["duty"].at(1).get<double>();
            }
            if (d.contains("cycle_hours")) {
                spec.demands.cycle_hours_min = d["cycle_hours"].at(0).get<double>();
                spec.demands.cycle_hours_max = d["cycle_hours"].at(1).get<double>();
            }
            spec.demands.amp_log_mu = d.value("amp_log_mu", spec.demands.amp_log_mu);
            spec.demands.amp_log_sigma = d.value("amp_log_sigma", spec.demands.amp_log_sigma);
            if (d.contains("amp_scales"))
                spec.demands.amp_scales = d["amp_scales"].get<std::vector<double>>();
        }
        if (j.contains("leak")) {
            const auto& l = j["leak"];
            const std::string type = l.value("type", "none");
            if (type == "none")
                spec.leak.type = LeakType::none;
            else if (type == "abrupt")
                spec.leak.type = LeakType::abrupt;
            else if (type == "incipient")
                spec.leak.type = LeakType::incipient;
            else
                throw ValidationError("scenario spec: unknown leak type '" + type + "'");
            if (l.contains("start"))
                spec.leak.start = parse_timestamp(l.at("start").get<std::string>());
            spec.leak.max_flow = l.value("max_flow_m3h", spec.leak.max_flow);
            spec.leak.ramp = l.value("ramp_s", spec.leak.ramp);
        }
        if (j.contains("coefficient_ranges")) {
            const auto& r = j["coefficient_ranges"];
            auto pair = [&](const char* key, double& lo, double& hi) {
                if (r.contains(key)) {
                    lo = r[key].at(0).get<double>();
                    hi = r[key].at(1).get<double>();
                }
            };
            pair("k0", spec.ranges.k0_min, spec.ranges.k0_max);
            pair("k1", spec.ranges.k1_min, spec.ranges.k1_max);
            pair("kd", spec.ranges.kd_min, spec.ranges.kd_max);
            pair("kd_home", spec.ranges.kd_home_min, spec.ranges.kd_home_max);
            pair("leak", spec.ranges.leak_min, spec.ranges.leak_max);
            pair("leak_home", spec.ranges.leak_home_min, spec.ranges.leak_home_max);
        }
        if (j.contains("coefficients"))
            spec.coefficients = CoefficientSet::from_json(j["coefficients"].dump());
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("scenario spec: ") + e.what());
    }
    spec.validate();
    return spec;
}

} // namespace leakwatch
