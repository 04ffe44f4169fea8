#include "gridswitch/controllers.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace gridswitch {

namespace {

constexpr const char* kFormatTag = "gridswitch-controller";
constexpr int kFormatVersion = 1;

int bank_net_count(const MonotoneBank& b) { return static_cast<int>(b.nets.size()); }

const MonotoneStackedReLU& net_for(const MonotoneBank& b, int bus)
{
    return b.nets.size() == 1 ? b.nets[0] : b.nets[static_cast<std::size_t>(bus)];
}

std::size_t net_offset(const MonotoneBank& b, int bus)
{
    if (b.nets.size() == 1) return 0;
    return static_cast<std::size_t>(bus) * MonotoneStackedReLU::raw_size(b.nets[0].hidden());
}

double dense_eval(const DenseBank& d, int bus, double x)
{
    const auto h = static_cast<std::size_t>(d.hidden);
    const double* p = d.params.data() + static_cast<std::size_t>(bus) * 3 * h;
    double y = 0.0;
    for (std::size_t j = 0; j < h; ++j) y += p[2 * h + j] * (std::tanh(p[j] * x + p[h + j]) - std::tanh(p[h + j]));
    return y;
}

double dense_slope(const DenseBank& d, int bus, double x)
{
    const auto h = static_cast<std::size_t>(d.hidden);
    const double* p = d.params.data() + static_cast<std::size_t>(bus) * 3 * h;
    double g = 0.0;
    for (std::size_t j = 0; j < h; ++j) {
        const double t = std::tanh(p[j] * x + p[h + j]);
        g += p[2 * h + j] * p[j] * (1.0 - t * t);
    }
    return g;
}

}  // namespace

std::string to_string(ControllerKind kind)
{
    switch (kind) {
    case ControllerKind::NeuralPI: return "neural_pi";
    case ControllerKind::LinearDroop: return "linear_droop";
    case ControllerKind::LinearPI: return "linear_pi";
    case ControllerKind::LyapunovNN: return "lyapunov_nn";
    case ControllerKind::NNPI: return "nn_pi";
    }
    return "unknown";
}

ControllerKind controller_kind_from_string(const std::string& text)
{
    for (auto k : {ControllerKind::NeuralPI, ControllerKind::LinearDroop, ControllerKind::LinearPI,
                   ControllerKind::LyapunovNN, ControllerKind::NNPI})
        if (to_string(k) == text) return k;
    throw std::invalid_argument("unknown controller kind: " + text);
}

Controller::Controller(ControllerKind kind, int n, ProportionalBank bank, double k)
    : kind_(kind), n_(n), bank_(std::move(bank)), k_(k)
{
    if (n < 1) throw std::invalid_argument("controller needs at least one bus");
    if (has_integral() && !(k > 0.0)) throw std::invalid_argument("integral gain must be positive");
}

Controller Controller::neural_pi(int n, int hidden, double k, bool shared)
{
    MonotoneBank b;
    b.nets.assign(shared ? 1 : static_cast<std::size_t>(n), MonotoneStackedReLU(hidden));
    return Controller(ControllerKind::NeuralPI, n, std::move(b), k);
}

Controller Controller::neural_pi_random(int n, int hidden, double k, Rng& rng, bool shared)
{
    MonotoneBank b;
    const int count = shared ? 1 : n;
    for (int i = 0; i < count; ++i) b.nets.push_back(MonotoneStackedReLU::random(hidden, rng, 0.0, 0.1));
    return Controller(ControllerKind::NeuralPI, n, std::move(b), k);
}

Controller Controller::lyapunov_nn(int n, int hidden, Rng& rng)
{
    MonotoneBank b;
    for (int i = 0; i < n; ++i) b.nets.push_back(MonotoneStackedReLU::random(hidden, rng, 0.0, 0.1));
    return Controller(ControllerKind::LyapunovNN, n, std::move(b), 0.0);
}

Controller Controller::linear_droop(int n, double gain)
{
    return Controller(ControllerKind::LinearDroop, n, LinearBank{Vec::Constant(n, gain)}, 0.0);
}

Controller Controller::linear_pi(int n, double gain, double k)
{
    return Controller(ControllerKind::LinearPI, n, LinearBank{Vec::Constant(n, gain)}, k);
}

Controller Controller::nn_pi(int n, int hidden, double k, Rng& rng)
{
    DenseBank d;
    d.hidden = hidden;
    d.params.resize(static_cast<std::size_t>(n) * 3 * static_cast<std::size_t>(hidden));
    std::normal_distribution<double> w(0.0, 1.0), small(0.0, 0.1);
    const auto h = static_cast<std::size_t>(hidden);
    for (int i = 0; i < n; ++i) {
        double* p = d.params.data() + static_cast<std::size_t>(i) * 3 * h;
        for (std::size_t j = 0; j < h; ++j) {
            p[j] = w(rng);
            p[h + j] = small(rng);
            p[2 * h + j] = small(rng);
        }
    }
    return Controller(ControllerKind::NNPI, n, std::move(d), k);
}

void Controller::set_integral_gain(double k)
{
    if (!has_integral()) return;
    if (!(k > 0.0)) throw std::invalid_argument("integral gain must be positive");
    k_ = k;
}

double Controller::proportional(int bus, double x) const
{
    if (const auto* m = std::get_if<MonotoneBank>(&bank_)) return net_for(*m, bus)(x);
    if (const auto* l = std::get_if<LinearBank>(&bank_)) return l->gains[bus] * x;
    return dense_eval(std::get<DenseBank>(bank_), bus, x);
}

double Controller::proportional_slope(int bus, double x) const
{
    if (const auto* m = std::get_if<MonotoneBank>(&bank_)) return net_for(*m, bus).slope(x);
    if (const auto* l = std::get_if<LinearBank>(&bank_)) return l->gains[bus];
    return dense_slope(std::get<DenseBank>(bank_), bus, x);
}

Vec Controller::raw_action(const Vec& omega, const Vec& s) const
{
    Vec z(n_);
    for (int i = 0; i < n_; ++i) z[i] = -proportional(i, omega[i]) + (has_integral() ? k_ * s[i] : 0.0);
    return z;
}

Vec Controller::action(const Vec& omega, const Vec& s, const GridModel& model) const
{
    Vec z = raw_action(omega, s);
    return z.cwiseMax(model.u_lower).cwiseMin(model.u_upper);
}

std::size_t Controller::proportional_parameter_count() const
{
    if (const auto* m = std::get_if<MonotoneBank>(&bank_))
        return m->nets.size() * MonotoneStackedReLU::raw_size(m->nets[0].hidden());
    if (const auto* l = std::get_if<LinearBank>(&bank_)) return static_cast<std::size_t>(l->gains.size());
    return std::get<DenseBank>(bank_).params.size();
}

std::size_t Controller::parameter_count() const
{
    return proportional_parameter_count() + (has_integral() ? 1 : 0);
}

std::vector<double> Controller::parameters() const
{
    std::vector<double> out;
    out.reserve(parameter_count());
    if (const auto* m = std::get_if<MonotoneBank>(&bank_)) {
        for (const auto& net : m->nets) out.insert(out.end(), net.raw().begin(), net.raw().end());
    } else if (const auto* l = std::get_if<LinearBank>(&bank_)) {
        out.insert(out.end(), l->gains.data(), l->gains.data() + l->gains.size());
    } else {
        const auto& p = std::get<DenseBank>(bank_).params;
        out.insert(out.end(), p.begin(), p.end());
    }
    if (has_integral()) out.push_back(k_);
    return out;
}

void Controller::set_parameters(std::span<const double> params)
{
    if (params.size() != parameter_count()) throw std::invalid_argument("controller parameter count mismatch");
    std::size_t pos = 0;
    if (auto* m = std::get_if<MonotoneBank>(&bank_)) {
        const auto sz = MonotoneStackedReLU::raw_size(m->nets[0].hidden());
        for (auto& net : m->nets) {
            net.set_raw(params.subspan(pos, sz));
            pos += sz;
        }
    } else if (auto* l = std::get_if<LinearBank>(&bank_)) {
        for (Eigen::Index i = 0; i < l->gains.size(); ++i) l->gains[i] = params[pos++];
    } else {
        auto& p = std::get<DenseBank>(bank_).params;
        std::copy(params.begin(), params.begin() + static_cast<std::ptrdiff_t>(p.size()), p.begin());
        pos += p.size();
    }
    if (has_integral()) k_ = params[pos];
}

void Controller::accumulate_proportional_gradient(int bus, double x, double upstream, std::span<double> grad) const
{
    if (upstream == 0.0) return;
    if (const auto* m = std::get_if<MonotoneBank>(&bank_)) {
        const auto sz = MonotoneStackedReLU::raw_size(m->nets[0].hidden());
        net_for(*m, bus).accumulate_gradient(x, upstream, grad.subspan(net_offset(*m, bus), sz));
        return;
    }
    if (std::holds_alternative<LinearBank>(bank_)) {
        grad[static_cast<std::size_t>(bus)] += upstream * x;
        return;
    }
    const auto& d = std::get<DenseBank>(bank_);
    const auto h = static_cast<std::size_t>(d.hidden);
    const std::size_t off = static_cast<std::size_t>(bus) * 3 * h;
    const double* p = d.params.data() + off;
    for (std::size_t j = 0; j < h; ++j) {
        const double t = std::tanh(p[j] * x + p[h + j]);
        const double t0 = std::tanh(p[h + j]);
        const double a = p[2 * h + j];
        grad[off + j] += upstream * a * (1.0 - t * t) * x;
        grad[off + h + j] += upstream * a * ((1.0 - t * t) - (1.0 - t0 * t0));
        grad[off + 2 * h + j] += upstream * (t - t0);
    }
}

void Controller::project()
{
    if (auto* l = std::get_if<LinearBank>(&bank_)) l->gains = l->gains.cwiseMax(0.0);
    if (has_integral()) k_ = std::max(k_, kMinIntegralGain);
}

double Controller::max_slope() const
{
    if (const auto* m = std::get_if<MonotoneBank>(&bank_)) {
        double s = 0.0;
        for (const auto& net : m->nets) s = std::max(s, net.max_slope());
        return s;
    }
    if (const auto* l = std::get_if<LinearBank>(&bank_)) return l->gains.maxCoeff();
    throw std::logic_error("slope bounds are undefined for an unconstrained network");
}

double Controller::min_slope() const
{
    if (const auto* m = std::get_if<MonotoneBank>(&bank_)) {
        double s = m->nets[0].min_slope();
        for (const auto& net : m->nets) s = std::min(s, net.min_slope());
        return s;
    }
    if (const auto* l = std::get_if<LinearBank>(&bank_)) return l->gains.minCoeff();
    throw std::logic_error("slope bounds are undefined for an unconstrained network");
}

bool Controller::feasible() const
{
    if (has_integral() && !(k_ > 0.0)) return false;
    if (const auto* m = std::get_if<MonotoneBank>(&bank_))
        return std::all_of(m->nets.begin(), m->nets.end(), [](const auto& net) { return net.feasible(); });
    if (const auto* l = std::get_if<LinearBank>(&bank_)) return (l->gains.array() >= 0.0).all();
    return true;
}

bool Controller::operator==(const Controller& o) const
{
    return kind_ == o.kind_ && n_ == o.n_ && k_ == o.k_ && trained_mode_ == o.trained_mode_ &&
           bank_.index() == o.bank_.index() && parameters() == o.parameters() &&
           serialize_controller(*this) == serialize_controller(o);
}

std::string serialize_controller(const Controller& c)
{
    std::ostringstream body;
    body << kFormatTag << ' ' << kFormatVersion << '\n';
    body << "kind " << to_string(c.kind()) << '\n';
    body << "n " << c.n() << '\n';
    int hidden = 0, nets = 0;
    if (const auto* m = std::get_if<MonotoneBank>(&c.bank())) {
        hidden = m->nets[0].hidden();
        nets = bank_net_count(*m);
    } else if (const auto* d = std::get_if<DenseBank>(&c.bank())) {
        hidden = d->hidden;
        nets = c.n();
    } else {
        nets = c.n();
    }
    body << "hidden " << hidden << '\n';
    body << "nets " << nets << '\n';
    body << "k " << format_double(c.integral_gain()) << '\n';
    body << "trained_mode " << c.trained_mode() << '\n';
    const auto params = c.parameters();
    body << "params " << params.size();
    for (double v : params) body << ' ' << format_double(v);
    body << '\n';
    const std::string text = body.str();
    return text + "hash " + content_hash(text) + '\n';
}

Controller deserialize_controller(const std::string& text)
{
    const auto hash_pos = text.rfind("hash ");
    if (hash_pos == std::string::npos) throw std::runtime_error("controller file: missing hash");
    const std::string body = text.substr(0, hash_pos);
    std::string stored = text.substr(hash_pos + 5);
    while (!stored.empty() && std::isspace(static_cast<unsigned char>(stored.back()))) stored.pop_back();
    if (stored != content_hash(body)) throw std::runtime_error("controller file: hash mismatch");

    std::istringstream in(body);
    std::string tag, key, kind_name, mode;
    int version = 0, n = 0, hidden = 0, nets = 0;
    std::string k_text;
    std::size_t count = 0;
    in >> tag >> version;
    if (tag != kFormatTag || version != kFormatVersion) throw std::runtime_error("controller file: unsupported format");
    auto expect = [&](const char* name) {
        in >> key;
        if (key != name) throw std::runtime_error(std::string("controller file: expected ") + name);
    };
    expect("kind");
    in >> kind_name;
    expect("n");
    in >> n;
    expect("hidden");
    in >> hidden;
    expect("nets");
    in >> nets;
    expect("k");
    in >> k_text;
    expect("trained_mode");
    in >> mode;
    expect("params");
    in >> count;
    if (!in) throw std::runtime_error("controller file: malformed header");
    std::vector<double> params(count);
    for (auto& v : params) {
        std::string tok;
        in >> tok;
        if (!in) throw std::runtime_error("controller file: truncated parameter list");
        v = parse_double(tok);
    }

    const auto kind = controller_kind_from_string(kind_name);
    const double k = parse_double(k_text);
    Rng unused(0);
    Controller c = [&] {
        switch (kind) {
        case ControllerKind::NeuralPI: return Controller::neural_pi(n, hidden, k, nets == 1 && n != 1);
        case ControllerKind::LyapunovNN: return Controller::lyapunov_nn(n, hidden, unused);
        case ControllerKind::LinearDroop: return Controller::linear_droop(n);
        case ControllerKind::LinearPI: return Controller::linear_pi(n, 1.0, k);
        case ControllerKind::NNPI: return Controller::nn_pi(n, hidden, k, unused);
        }
        throw std::runtime_error("controller file: unknown kind");
    }();
    c.set_parameters(params);
    c.set_trained_mode(mode);
    if (!c.feasible()) throw std::runtime_error("controller file: parameters violate controller invariants");
    return c;
}

void save_controller(const Controller& c, const std::filesystem::path& path)
{
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << serialize_controller(c);
}

Controller load_controller(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return deserialize_controller(ss.str());
}

void validate_pool(const std::vector<Controller>& pool)
{
    if (pool.empty()) throw std::invalid_argument("controller pool is empty");
    const int n = pool.front().n();
    double k = -1.0;
    for (const auto& c : pool) {
        if (c.n() != n) throw std::invalid_argument("controller pool mixes bus counts");
        if (!c.has_integral()) continue;
        if (k < 0.0) k = c.integral_gain();
        else if (c.integral_gain() != k)
            throw std::invalid_argument("controller pool members must share the integral gain k");
    }
}

}  // namespace gridswitch
