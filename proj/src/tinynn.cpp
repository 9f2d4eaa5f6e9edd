#include "dpsynth/tinynn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "dpsynth/errors.hpp"
#include "dpsynth/mechanisms.hpp"
#include "dpsynth/tensor.hpp"

namespace dpsynth {

using nlohmann::json;

std::size_t MlpSpec::param_count() const {
    std::size_t n = 0;
    for (std::size_t l = 1; l < layer_sizes.size(); ++l)
        n += layer_sizes[l] * layer_sizes[l - 1] + layer_sizes[l];
    return n;
}

void MlpSpec::validate() const {
    if (layer_sizes.size() < 2)
        throw ValidationError("an MLP needs at least input and output layers");
    for (std::size_t s : layer_sizes)
        if (s < 1) throw ValidationError("layer sizes must be positive");
}

ModelCheckpoint init_checkpoint(const MlpSpec& spec, SeededRng& rng) {
    spec.validate();
    ModelCheckpoint ckpt;
    ckpt.spec = spec;
    ckpt.params.resize(spec.param_count());
    std::size_t off = 0;
    for (std::size_t l = 1; l < spec.layer_sizes.size(); ++l) {
        const std::size_t in = spec.layer_sizes[l - 1], out = spec.layer_sizes[l];
        const double scale = std::sqrt(2.0 / static_cast<double>(in));
        for (std::size_t i = 0; i < out * in; ++i)
            ckpt.params[off + i] = scale * rng.normal();
        off += out * in;
        for (std::size_t i = 0; i < out; ++i) ckpt.params[off + i] = 0.0;
        off += out;
    }
    ckpt.rng_position = rng.position();
    return ckpt;
}

namespace {

struct Workspace {
    // inputs[l] feeds layer l; preacts[l] is its affine output.
    std::vector<std::vector<double>> inputs;
    std::vector<std::vector<double>> preacts;
};

void affine(const double* w, const double* b, const std::vector<double>& x,
            std::size_t in, std::size_t out, std::vector<double>& z) {
    z.assign(out, 0.0);
    for (std::size_t i = 0; i < out; ++i) {
        const double* row = w + i * in;
        double acc = b[i];
        for (std::size_t k = 0; k < in; ++k) acc += row[k] * x[k];
        z[i] = acc;
    }
}

std::vector<double> activate(const std::vector<double>& z, Activation act) {
    std::vector<double> a(z.size());
    if (act == Activation::relu)
        for (std::size_t i = 0; i < z.size(); ++i) a[i] = z[i] > 0.0 ? z[i] : 0.0;
    else
        for (std::size_t i = 0; i < z.size(); ++i) a[i] = std::tanh(z[i]);
    return a;
}

std::vector<double> softmax(const std::vector<double>& z) {
    const double mx = *std::max_element(z.begin(), z.end());
    std::vector<double> p(z.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        p[i] = std::exp(z[i] - mx);
        sum += p[i];
    }
    for (double& v : p) v /= sum;
    return p;
}

// Head input z_L for one example; workspace filled when provided.
std::vector<double> run_forward(const MlpSpec& spec, const double* params,
                                const std::vector<double>& x, Workspace* ws) {
    if (x.size() != spec.input_dim())
        throw ValidationError("input dimension does not match the MLP spec");
    const std::size_t layers = spec.layer_sizes.size() - 1;
    std::vector<double> cur = x;
    std::size_t off = 0;
    if (ws) {
        ws->inputs.assign(layers, {});
        ws->preacts.assign(layers, {});
    }
    std::vector<double> z;
    for (std::size_t l = 0; l < layers; ++l) {
        const std::size_t in = spec.layer_sizes[l], out = spec.layer_sizes[l + 1];
        if (ws) ws->inputs[l] = cur;
        affine(params + off, params + off + out * in, cur, in, out, z);
        off += out * in + out;
        if (ws) ws->preacts[l] = z;
        cur = (l + 1 < layers) ? activate(z, spec.activation) : z;
    }
    return cur;
}

// Backpropagate dz (gradient at the head input) through the net,
// accumulating into grad; optionally emits the input gradient.
void run_backward(const MlpSpec& spec, const double* params, const Workspace& ws,
                  std::vector<double> dz, double* grad,
                  std::vector<double>* dx_out = nullptr) {
    const std::size_t layers = spec.layer_sizes.size() - 1;
    std::vector<std::size_t> offsets(layers);
    std::size_t off = 0;
    for (std::size_t l = 0; l < layers; ++l) {
        offsets[l] = off;
        off += spec.layer_sizes[l + 1] * spec.layer_sizes[l] + spec.layer_sizes[l + 1];
    }

    for (std::size_t li = layers; li-- > 0;) {
        const std::size_t in = spec.layer_sizes[li], out = spec.layer_sizes[li + 1];
        const double* w = params + offsets[li];
        double* gw = grad + offsets[li];
        double* gb = gw + out * in;
        const std::vector<double>& input = ws.inputs[li];

        for (std::size_t i = 0; i < out; ++i) {
            const double d = dz[i];
            gb[i] += d;
            double* grow = gw + i * in;
            for (std::size_t k = 0; k < in; ++k) grow[k] += d * input[k];
        }

        const bool need_dx = li > 0 || dx_out != nullptr;
        if (!need_dx) break;
        std::vector<double> dx(in, 0.0);
        for (std::size_t i = 0; i < out; ++i) {
            const double d = dz[i];
            const double* row = w + i * in;
            for (std::size_t k = 0; k < in; ++k) dx[k] += d * row[k];
        }
        if (li == 0) {
            if (dx_out) *dx_out = std::move(dx);
            break;
        }
        // Through the previous layer's activation.
        const std::vector<double>& z_prev = ws.preacts[li - 1];
        dz.assign(in, 0.0);
        if (spec.activation == Activation::relu) {
            for (std::size_t k = 0; k < in; ++k)
                dz[k] = z_prev[k] > 0.0 ? dx[k] : 0.0;
        } else {
            for (std::size_t k = 0; k < in; ++k) {
                const double th = std::tanh(z_prev[k]);
                dz[k] = dx[k] * (1.0 - th * th);
            }
        }
    }
}

void check_pairing(const MlpSpec& spec, Loss loss) {
    if (loss == Loss::mse && spec.output_head != OutputHead::linear)
        throw ValidationError("mse pairs with the linear head");
    if (loss == Loss::cross_entropy && spec.output_head != OutputHead::softmax)
        throw ValidationError("cross_entropy pairs with the softmax head");
}

// Loss and the gradient at the head input for one example.
double loss_and_dz(const std::vector<double>& z_head,
                   const std::vector<double>& target, Loss loss,
                   std::vector<double>* dz) {
    if (target.size() != z_head.size())
        throw ValidationError("target dimension does not match the output");
    if (loss == Loss::mse) {
        double l = 0.0;
        if (dz) dz->resize(z_head.size());
        for (std::size_t i = 0; i < z_head.size(); ++i) {
            const double diff = z_head[i] - target[i];
            l += diff * diff;
            if (dz) (*dz)[i] = 2.0 * diff;
        }
        return l;
    }
    const std::vector<double> p = softmax(z_head);
    double l = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i)
        if (target[i] != 0.0) l -= target[i] * std::log(std::max(p[i], 1e-300));
    if (dz) {
        dz->resize(p.size());
        for (std::size_t i = 0; i < p.size(); ++i) (*dz)[i] = p[i] - target[i];
    }
    return l;
}

} // namespace

std::vector<double> forward(const ModelCheckpoint& ckpt, const std::vector<double>& x) {
    if (ckpt.params.size() != ckpt.spec.param_count())
        throw ValidationError("parameter vector does not match the spec");
    std::vector<double> z = run_forward(ckpt.spec, ckpt.params.data(), x, nullptr);
    if (ckpt.spec.output_head == OutputHead::softmax) return softmax(z);
    return z;
}

std::vector<double> penultimate_features(const ModelCheckpoint& ckpt,
                                         const std::vector<double>& x) {
    if (ckpt.spec.layer_sizes.size() < 3)
        throw ValidationError("no hidden layer to extract features from");
    Workspace ws;
    run_forward(ckpt.spec, ckpt.params.data(), x, &ws);
    // Input of the final layer is the activated last hidden layer.
    return ws.inputs.back();
}

double loss_value(const ModelCheckpoint& ckpt, const Example& ex, Loss loss) {
    check_pairing(ckpt.spec, loss);
    const std::vector<double> z = run_forward(ckpt.spec, ckpt.params.data(), ex.x, nullptr);
    return loss_and_dz(z, ex.target, loss, nullptr);
}

std::vector<double> grad_single(const ModelCheckpoint& ckpt, const Example& ex,
                                Loss loss, double* loss_out) {
    check_pairing(ckpt.spec, loss);
    Workspace ws;
    const std::vector<double> z = run_forward(ckpt.spec, ckpt.params.data(), ex.x, &ws);
    std::vector<double> dz;
    const double l = loss_and_dz(z, ex.target, loss, &dz);
    if (loss_out) *loss_out = l;
    std::vector<double> grad(ckpt.params.size(), 0.0);
    run_backward(ckpt.spec, ckpt.params.data(), ws, std::move(dz), grad.data());
    return grad;
}

std::vector<std::vector<double>> per_example_grads(const ModelCheckpoint& ckpt,
                                                   const std::vector<Example>& batch,
                                                   Loss loss, kernels::Exec exec) {
    if (batch.empty()) throw ValidationError("per-example gradients need a batch");
    check_pairing(ckpt.spec, loss);
    std::vector<std::vector<double>> grads(batch.size());
    const auto n = static_cast<std::ptrdiff_t>(batch.size());
#pragma omp parallel for if (exec == kernels::Exec::parallel) schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i)
        grads[static_cast<std::size_t>(i)] =
            grad_single(ckpt, batch[static_cast<std::size_t>(i)], loss);
    return grads;
}

std::vector<double> grad_from_output(const ModelCheckpoint& ckpt,
                                     const std::vector<double>& x,
                                     const std::vector<double>& dout) {
    Workspace ws;
    run_forward(ckpt.spec, ckpt.params.data(), x, &ws);
    if (dout.size() != ckpt.spec.output_dim())
        throw ValidationError("output gradient dimension mismatch");
    std::vector<double> grad(ckpt.params.size(), 0.0);
    run_backward(ckpt.spec, ckpt.params.data(), ws, dout, grad.data());
    return grad;
}

std::vector<std::size_t> poisson_batch(std::size_t n, double q, SeededRng& rng) {
    if (!(q > 0.0 && q <= 1.0))
        throw ValidationError("Poisson rate must lie in (0,1]");
    std::vector<std::size_t> idx;
    if (q == 1.0) {
        idx.resize(n);
        for (std::size_t i = 0; i < n; ++i) idx[i] = i;
        return idx;
    }
    for (std::size_t i = 0; i < n; ++i)
        if (rng.uniform() < q) idx.push_back(i);
    return idx;
}

void DpSgdConfig::validate() const {
    if (!(clip_bound > 0.0)) throw ValidationError("clip bound must be positive");
    if (sigma < 0.0) throw ValidationError("sigma must be nonnegative");
    if (!(q > 0.0 && q <= 1.0)) throw ValidationError("rate must lie in (0,1]");
    if (!(lr > 0.0)) throw ValidationError("learning rate must be positive");
}

ModelCheckpoint dpsgd_step(const ModelCheckpoint& ckpt,
                           const std::vector<std::vector<double>>& example_grads,
                           const DpSgdConfig& cfg, SeededRng& rng) {
    cfg.validate();
    ModelCheckpoint next = ckpt;
    ++next.step;
    if (example_grads.empty()) {
        next.rng_position = rng.position();
        return next;
    }

    const std::size_t dim = ckpt.params.size();
    const double batch = static_cast<double>(example_grads.size());
    std::vector<double> update(dim, 0.0);
    for (const auto& g : example_grads) {
        if (g.size() != dim)
            throw ValidationError("gradient size does not match the parameters");
        std::vector<double> clipped = clip_l2(g, cfg.clip_bound);
        if (l2_norm(clipped) > cfg.clip_bound * (1.0 + 1e-12))
            throw Error("clipped gradient escaped its bound");
        for (std::size_t i = 0; i < dim; ++i) update[i] += clipped[i];
    }
    for (double& v : update) v /= batch;

    if (cfg.sigma > 0.0) {
        const double noise_scale = cfg.clip_bound * cfg.sigma / batch;
        for (std::size_t i = 0; i < dim; ++i)
            update[i] += noise_scale * rng.normal();
    }
    for (std::size_t i = 0; i < dim; ++i)
        next.params[i] = ckpt.params[i] - cfg.lr * update[i];
    next.rng_position = rng.position();
    return next;
}

void Adam::step(std::vector<double>& params, const std::vector<double>& grad) {
    if (m_.empty()) {
        m_.assign(params.size(), 0.0);
        v_.assign(params.size(), 0.0);
    }
    if (grad.size() != params.size())
        throw ValidationError("gradient size does not match the parameters");
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        m_[i] = beta1 * m_[i] + (1.0 - beta1) * grad[i];
        v_[i] = beta2 * v_[i] + (1.0 - beta2) * grad[i] * grad[i];
        params[i] -= lr * (m_[i] / bc1) / (std::sqrt(v_[i] / bc2) + eps);
    }
}

void save_checkpoint(const std::string& path_stem, const ModelCheckpoint& ckpt) {
    Tensor t({ckpt.params.size()});
    t.data = ckpt.params;
    write_tensor_file(path_stem + ".params.tf", t, Dtype::f32);

    json j;
    j["layer_sizes"] = ckpt.spec.layer_sizes;
    j["activation"] = ckpt.spec.activation == Activation::relu ? "relu" : "tanh";
    j["output_head"] =
        ckpt.spec.output_head == OutputHead::linear ? "linear" : "softmax";
    j["step"] = ckpt.step;
    j["rng_position"] = ckpt.rng_position;
    j["meta"] = ckpt.meta;
    std::ofstream out(path_stem + ".spec.json");
    out << j.dump(2) << "\n";
}

ModelCheckpoint load_checkpoint(const std::string& path_stem) {
    std::ifstream in(path_stem + ".spec.json");
    if (!in) throw FormatError("missing checkpoint sidecar: " + path_stem);
    json j = json::parse(in);

    ModelCheckpoint ckpt;
    ckpt.spec.layer_sizes = j.at("layer_sizes").get<std::vector<std::size_t>>();
    ckpt.spec.activation =
        j.at("activation").get<std::string>() == "relu" ? Activation::relu : Activation::tanh;
    ckpt.spec.output_head = j.at("output_head").get<std::string>() == "linear"
                                ? OutputHead::linear
                                : OutputHead::softmax;
    ckpt.step = j.at("step").get<std::size_t>();
    ckpt.rng_position = j.at("rng_position").get<uint64_t>();
    if (j.contains("meta"))
        ckpt.meta = j.at("meta").get<std::map<std::string, std::string>>();

    const Tensor t = read_tensor_file(path_stem + ".params.tf");
    ckpt.params = t.data;
    if (ckpt.params.size() != ckpt.spec.param_count())
        throw FormatError("checkpoint parameter count does not match its spec");
    return ckpt;
}

} // namespace dpsynth
