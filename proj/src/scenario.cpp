#include "gridswitch/scenario.hpp"

#include <fstream>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

namespace gridswitch {

namespace pt = boost::property_tree;

namespace {

class Section {
public:
    Section(const pt::ptree& root, std::string name) : name_(std::move(name))
    {
        if (auto child = root.get_child_optional(pt::ptree::path_type(name_, '/'))) node_ = &*child;
    }

    bool has(const std::string& key) const { return node_ && node_->get_child_optional(path(key)); }

    std::string raw(const std::string& key) const
    {
        if (!has(key)) throw ConfigError(field(key), "missing field");
        return node_->get<std::string>(path(key));
    }

    double number(const std::string& key) const
    {
        try {
            return parse_double(raw(key));
        } catch (const std::invalid_argument& e) {
            throw ConfigError(field(key), e.what());
        }
    }
    double number(const std::string& key, double fallback) const { return has(key) ? number(key) : fallback; }

    long integer(const std::string& key) const
    {
        try {
            return parse_int(raw(key));
        } catch (const std::invalid_argument& e) {
            throw ConfigError(field(key), e.what());
        }
    }
    long integer(const std::string& key, long fallback) const { return has(key) ? integer(key) : fallback; }

    bool flag(const std::string& key, bool fallback) const
    {
        if (!has(key)) return fallback;
        const auto v = raw(key);
        if (v == "true" || v == "1") return true;
        if (v == "false" || v == "0") return false;
        throw ConfigError(field(key), "expected true/false");
    }

    std::vector<double> list(const std::string& key) const
    {
        try {
            return parse_list(raw(key));
        } catch (const std::invalid_argument& e) {
            throw ConfigError(field(key), e.what());
        }
    }

    Vec vector(const std::string& key, int n) const
    {
        auto values = list(key);
        if (static_cast<int>(values.size()) != n)
            throw ConfigError(field(key), "expected " + std::to_string(n) + " values, got " +
                                              std::to_string(values.size()));
        return Eigen::Map<Vec>(values.data(), n);
    }
    Vec vector(const std::string& key, int n, double fill) const
    {
        return has(key) ? vector(key, n) : Vec::Constant(n, fill);
    }

    std::string field(const std::string& key) const { return name_ + "." + key; }

private:
    static pt::ptree::path_type path(const std::string& key) { return pt::ptree::path_type(key, '/'); }

    std::string name_;
    const pt::ptree* node_ = nullptr;
};

void require_positive(const Vec& v, const std::string& field, const std::string& what)
{
    for (Eigen::Index i = 0; i < v.size(); ++i)
        if (!(v[i] > 0.0)) throw ConfigError(field, "non-positive " + what + " at bus " + std::to_string(i));
}

std::vector<Line> parse_lines(const Section& grid, const std::vector<double>& susceptance)
{
    const std::string text = grid.raw("lines");
    std::istringstream in(text);
    std::vector<Line> lines;
    std::string token;
    while (in >> token) {
        const auto dash = token.find('-');
        if (dash == std::string::npos) throw ConfigError(grid.field("lines"), "expected from-to pairs, got '" + token + "'");
        try {
            Line l;
            l.from = static_cast<int>(parse_int(token.substr(0, dash)));
            l.to = static_cast<int>(parse_int(token.substr(dash + 1)));
            lines.push_back(l);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(grid.field("lines"), e.what());
        }
    }
    if (lines.size() != susceptance.size())
        throw ConfigError(grid.field("susceptance"), "expected one value per line");
    for (std::size_t k = 0; k < lines.size(); ++k) {
        if (!(susceptance[k] > 0.0)) throw ConfigError(grid.field("susceptance"), "non-positive susceptance");
        lines[k].susceptance = susceptance[k];
    }
    return lines;
}

Scenario from_tree(const pt::ptree& root)
{
    Scenario sc;
    GridModel& g = sc.grid;

    const Section grid(root, "grid");
    g.name = grid.has("name") ? grid.raw("name") : std::string("unnamed");
    g.base_hz = grid.number("base_hz", 60.0);
    g.n = static_cast<int>(grid.integer("n"));
    if (g.n < 1) throw ConfigError(grid.field("n"), "bus count must be positive");
    g.lines = parse_lines(grid, grid.list("susceptance"));
    g.damping = grid.vector("damping", g.n);
    require_positive(g.damping, grid.field("damping"), "damping");
    g.injection = grid.vector("injection", g.n);
    g.cost = grid.vector("cost", g.n, 1.0);
    require_positive(g.cost, grid.field("cost"), "cost");
    g.u_lower = grid.vector("u_lower", g.n, -1.0);
    g.u_upper = grid.vector("u_upper", g.n, 1.0);

    const Section modes(root, "modes");
    g.mode_labels = modes.list("labels");
    if (g.mode_labels.empty()) throw ConfigError(modes.field("labels"), "at least one mode is required");
    for (std::size_t q = 0; q < g.mode_labels.size(); ++q) {
        const std::string key = "inertia_" + std::to_string(q);
        Vec m;
        if (modes.has(key)) {
            m = modes.vector(key, g.n);
        } else if (modes.has("nominal")) {
            m = modes.vector("nominal", g.n) * g.mode_labels[q];
        } else {
            throw ConfigError(modes.field(key), "missing field");
        }
        require_positive(m, modes.field(key), "inertia");
        g.inertia.push_back(std::move(m));
    }
    try {
        g.validate();
    } catch (const ModelError& e) {
        throw ConfigError("grid", e.what());
    }

    const Section dist(root, "disturbances");
    sc.disturbance_settings.magnitude = dist.number("magnitude", 0.3);
    if (!(sc.disturbance_settings.magnitude >= 0.0)) throw ConfigError(dist.field("magnitude"), "must be non-negative");
    if (dist.has("event_times")) sc.disturbance_settings.event_times = dist.list("event_times");
    sc.disturbance_settings.window_s = dist.number("window_s", 3.0);
    if (!(sc.disturbance_settings.window_s > 0.0)) throw ConfigError(dist.field("window_s"), "must be positive");
    const long events = dist.integer("events", 0);
    for (long i = 0; i < events; ++i) {
        const std::string prefix = "event_" + std::to_string(i);
        DisturbanceEvent ev;
        ev.time = dist.number(prefix + "_time");
        ev.step = dist.vector(prefix + "_step", g.n);
        sc.disturbances.events.push_back(std::move(ev));
    }

    const Section sw(root, "switching");
    SwitchConfig& s = sc.switching;
    s.selection_steps = static_cast<int>(sw.integer("n_s", s.selection_steps));
    s.trial_steps = static_cast<int>(sw.integer("n_t", s.trial_steps));
    s.learning_rate = sw.number("xi", s.learning_rate);
    s.batch_steps = static_cast<int>(sw.integer("tau", s.batch_steps));
    s.trigger_hz = sw.number("trigger_hz", s.trigger_hz);
    s.reset_bandit = sw.flag("reset_bandit", s.reset_bandit);
    s.validate();

    ScheduleSettings& ss = sc.schedule_settings;
    ss.horizon_s = sw.number("horizon_s", ss.horizon_s);
    ss.dwell_s = sw.number("dwell_s", ss.dwell_s);
    if (!(ss.dwell_s > 0.0)) throw ConfigError(sw.field("dwell_s"), "must be positive");
    if (!(ss.horizon_s > 0.0)) throw ConfigError(sw.field("horizon_s"), "must be positive");
    ss.randomized_dwell = sw.flag("randomized_dwell", false);
    if (sw.has("transition")) {
        const int m = g.mode_count();
        auto values = sw.list("transition");
        if (static_cast<int>(values.size()) != m * m)
            throw ConfigError(sw.field("transition"), "expected " + std::to_string(m * m) + " values");
        InertiaChain chain;
        chain.transition = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
            values.data(), m, m);
        chain.initial = sw.has("initial_probs") ? sw.list("initial_probs")
                                                : std::vector<double>(static_cast<std::size_t>(m), 1.0 / m);
        try {
            chain.validate();
        } catch (const ModelError& e) {
            throw ConfigError(sw.field("transition"), e.what());
        }
        ss.chain = std::move(chain);
    } else if (g.mode_count() != 3) {
        throw ConfigError(sw.field("transition"), "required unless exactly three modes are configured");
    }
    if (sw.has("mode_sequence")) {
        sc.schedule.modes.clear();
        for (double q : sw.list("mode_sequence")) sc.schedule.modes.push_back(static_cast<int>(q));
        sc.schedule.switch_times = sw.has("switch_times") ? sw.list("switch_times") : std::vector<double>{};
        try {
            sc.schedule.validate(g.mode_count());
        } catch (const ModelError& e) {
            throw ConfigError(sw.field("mode_sequence"), e.what());
        }
    }

    const Section tr(root, "training");
    TrainConfig& t = sc.training;
    t.episodes = static_cast<int>(tr.integer("episodes", t.episodes));
    t.trajectories = static_cast<int>(tr.integer("trajectories", t.trajectories));
    t.horizon_steps = static_cast<int>(tr.integer("horizon_steps", t.horizon_steps));
    t.dt = tr.number("dt", t.dt);
    t.learning_rate = tr.number("learning_rate", t.learning_rate);
    t.lr_decay_factor = tr.number("lr_decay_factor", t.lr_decay_factor);
    t.lr_decay_interval = static_cast<int>(tr.integer("lr_decay_interval", t.lr_decay_interval));
    t.lambda = tr.number("lambda", t.lambda);
    t.beta1 = tr.number("beta1", t.beta1);
    t.beta2 = tr.number("beta2", t.beta2);
    t.adam_epsilon = tr.number("adam_epsilon", t.adam_epsilon);
    t.seed = static_cast<std::uint64_t>(tr.integer("seed", static_cast<long>(t.seed)));
    t.onset_fraction = tr.number("onset_fraction", t.onset_fraction);
    t.hidden_units = static_cast<int>(tr.integer("hidden_units", t.hidden_units));
    t.integral_gain = tr.number("k", t.integral_gain);
    t.learn_integral_gain = tr.flag("learn_k", t.learn_integral_gain);
    t.shared_network = tr.flag("shared_network", t.shared_network);
    t.workers = static_cast<int>(tr.integer("workers", t.workers));
    t.validate();
    return sc;
}

pt::ptree to_tree(const Scenario& sc)
{
    pt::ptree root;
    auto put = [&root](const std::string& section, const std::string& key, const std::string& value) {
        root.put(pt::ptree::path_type(section + "/" + key, '/'), value);
    };
    auto flag = [](bool b) { return std::string(b ? "true" : "false"); };
    const GridModel& g = sc.grid;

    put("grid", "name", g.name);
    put("grid", "base_hz", format_double(g.base_hz));
    put("grid", "n", std::to_string(g.n));
    std::string lines, susceptance;
    for (std::size_t k = 0; k < g.lines.size(); ++k) {
        if (k) {
            lines += ' ';
            susceptance += ' ';
        }
        lines += std::to_string(g.lines[k].from) + "-" + std::to_string(g.lines[k].to);
        susceptance += format_double(g.lines[k].susceptance);
    }
    put("grid", "lines", lines);
    put("grid", "susceptance", susceptance);
    put("grid", "damping", format_vector(g.damping));
    put("grid", "injection", format_vector(g.injection));
    put("grid", "cost", format_vector(g.cost));
    put("grid", "u_lower", format_vector(g.u_lower));
    put("grid", "u_upper", format_vector(g.u_upper));

    put("modes", "labels", format_list(g.mode_labels));
    for (std::size_t q = 0; q < g.inertia.size(); ++q)
        put("modes", "inertia_" + std::to_string(q), format_vector(g.inertia[q]));

    const auto& ds = sc.disturbance_settings;
    put("disturbances", "magnitude", format_double(ds.magnitude));
    put("disturbances", "event_times", format_list(ds.event_times));
    put("disturbances", "window_s", format_double(ds.window_s));
    put("disturbances", "events", std::to_string(sc.disturbances.events.size()));
    for (std::size_t i = 0; i < sc.disturbances.events.size(); ++i) {
        const std::string prefix = "event_" + std::to_string(i);
        put("disturbances", prefix + "_time", format_double(sc.disturbances.events[i].time));
        put("disturbances", prefix + "_step", format_vector(sc.disturbances.events[i].step));
    }

    const auto& s = sc.switching;
    put("switching", "n_s", std::to_string(s.selection_steps));
    put("switching", "n_t", std::to_string(s.trial_steps));
    put("switching", "xi", format_double(s.learning_rate));
    put("switching", "tau", std::to_string(s.batch_steps));
    put("switching", "trigger_hz", format_double(s.trigger_hz));
    put("switching", "reset_bandit", flag(s.reset_bandit));
    const auto& ss = sc.schedule_settings;
    put("switching", "horizon_s", format_double(ss.horizon_s));
    put("switching", "dwell_s", format_double(ss.dwell_s));
    put("switching", "randomized_dwell", flag(ss.randomized_dwell));
    if (ss.chain) {
        put("switching", "initial_probs", format_list(ss.chain->initial));
        std::vector<double> flat;
        for (Eigen::Index i = 0; i < ss.chain->transition.rows(); ++i)
            for (Eigen::Index j = 0; j < ss.chain->transition.cols(); ++j) flat.push_back(ss.chain->transition(i, j));
        put("switching", "transition", format_list(flat));
    }
    put("switching", "switch_times", format_list(sc.schedule.switch_times));
    std::string modes;
    for (std::size_t i = 0; i < sc.schedule.modes.size(); ++i) {
        if (i) modes += ' ';
        modes += std::to_string(sc.schedule.modes[i]);
    }
    put("switching", "mode_sequence", modes);

    const auto& t = sc.training;
    put("training", "episodes", std::to_string(t.episodes));
    put("training", "trajectories", std::to_string(t.trajectories));
    put("training", "horizon_steps", std::to_string(t.horizon_steps));
    put("training", "dt", format_double(t.dt));
    put("training", "learning_rate", format_double(t.learning_rate));
    put("training", "lr_decay_factor", format_double(t.lr_decay_factor));
    put("training", "lr_decay_interval", std::to_string(t.lr_decay_interval));
    put("training", "lambda", format_double(t.lambda));
    put("training", "beta1", format_double(t.beta1));
    put("training", "beta2", format_double(t.beta2));
    put("training", "adam_epsilon", format_double(t.adam_epsilon));
    put("training", "seed", std::to_string(t.seed));
    put("training", "onset_fraction", format_double(t.onset_fraction));
    put("training", "hidden_units", std::to_string(t.hidden_units));
    put("training", "k", format_double(t.integral_gain));
    put("training", "learn_k", flag(t.learn_integral_gain));
    put("training", "shared_network", flag(t.shared_network));
    put("training", "workers", std::to_string(t.workers));
    return root;
}

}  // namespace

Scenario parse_scenario(std::istream& in)
{
    pt::ptree root;
    try {
        pt::read_ini(in, root);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigError("file", std::string("malformed scenario: ") + e.message() + " (line " +
                                      std::to_string(e.line()) + ")");
    }
    return from_tree(root);
}

Scenario parse_scenario_string(const std::string& text)
{
    std::istringstream in(text);
    return parse_scenario(in);
}

Scenario load_scenario(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw ConfigError("file", "cannot open " + path.string());
    return parse_scenario(in);
}

void write_scenario(const Scenario& scenario, std::ostream& out)
{
    pt::write_ini(out, to_tree(scenario));
}

std::string scenario_to_string(const Scenario& scenario)
{
    std::ostringstream out;
    write_scenario(scenario, out);
    return out.str();
}

void save_scenario(const Scenario& scenario, const std::filesystem::path& path)
{
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw ConfigError("file", "cannot write " + path.string());
    write_scenario(scenario, out);
}

}  // namespace gridswitch
