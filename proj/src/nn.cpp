#include "orthograd/nn.hpp"

#include <cmath>
#include <stdexcept>

#include "orthograd/rng.hpp"

namespace orthograd
{

// ---------------------------------------------------------------------------
// Specs
// ---------------------------------------------------------------------------

LayerSpec LayerSpec::conv(std::string name, Index in, Index out, Index kernel, Index stride,
                          Index padding, bool bias)
{
    LayerSpec s{LayerType::Conv2d, std::move(name)};
    s.in_channels  = in;
    s.out_channels = out;
    s.kernel       = kernel;
    s.stride       = stride;
    s.padding      = padding;
    s.affine       = bias;
    return s;
}

LayerSpec LayerSpec::batch_norm(std::string name, Index channels, bool affine)
{
    LayerSpec s{LayerType::BatchNorm2d, std::move(name)};
    s.in_channels  = channels;
    s.out_channels = channels;
    s.affine       = affine;
    return s;
}

LayerSpec LayerSpec::relu(std::string name) { return LayerSpec{LayerType::ReLU, std::move(name)}; }

LayerSpec LayerSpec::flatten() { return LayerSpec{LayerType::Flatten, "flatten"}; }

LayerSpec LayerSpec::dense(std::string name, Index in, Index out, bool bias)
{
    LayerSpec s{LayerType::Dense, std::move(name)};
    s.in_channels  = in;
    s.out_channels = out;
    s.affine       = bias;
    return s;
}

namespace
{

Index conv_out(Index in, Index kernel, Index stride, Index padding)
{
    return (in + 2 * padding - kernel) / stride + 1;
}

std::string shape_str(const Shape& s)
{
    std::string out = "(";
    for (std::size_t i = 0; i < s.size(); ++i)
    {
        out += (i ? ", " : "") + std::to_string(s[i]);
    }
    return out + ")";
}

} // namespace

std::vector<Shape> ModelSpec::layer_output_shapes() const
{
    std::vector<Shape> out;
    Shape cur = input;
    for (const LayerSpec& l : layers)
    {
        auto fail = [&](const std::string& why) {
            throw ShapeError("layer '" + l.name + "' cannot take input " + shape_str(cur) + ": " + why);
        };
        switch (l.type)
        {
        case LayerType::Conv2d:
            if (cur.size() != 3 || cur[0] != l.in_channels)
                fail("expected (" + std::to_string(l.in_channels) + ", H, W)");
            if (l.kernel < 1 || l.stride < 1 || l.padding < 0)
                fail("bad kernel/stride/padding");
            if (cur[1] + 2 * l.padding < l.kernel || cur[2] + 2 * l.padding < l.kernel)
                fail("kernel larger than padded input");
            cur = {l.out_channels, conv_out(cur[1], l.kernel, l.stride, l.padding),
                   conv_out(cur[2], l.kernel, l.stride, l.padding)};
            break;
        case LayerType::BatchNorm2d:
            if (cur.size() != 3 || cur[0] != l.in_channels)
                fail("expected (" + std::to_string(l.in_channels) + ", H, W)");
            break;
        case LayerType::ReLU:
            break;
        case LayerType::Flatten:
            cur = {element_count(cur)};
            break;
        case LayerType::Dense:
            if (cur.size() != 1 || cur[0] != l.in_channels)
                fail("expected (" + std::to_string(l.in_channels) + ")");
            cur = {l.out_channels};
            break;
        }
        out.push_back(cur);
    }
    if (out.empty() || out.back().size() != 1)
    {
        throw ShapeError("model '" + name + "' must end in a flat (classes) output");
    }
    return out;
}

Shape ModelSpec::output_shape() const { return layer_output_shapes().back(); }

Index ModelSpec::parameter_count() const
{
    validate();
    Index total = 0;
    for (const LayerSpec& l : layers)
    {
        switch (l.type)
        {
        case LayerType::Conv2d:
            total += l.out_channels * l.in_channels * l.kernel * l.kernel + (l.affine ? l.out_channels : 0);
            break;
        case LayerType::BatchNorm2d:
            total += l.affine ? 2 * l.in_channels : 0;
            break;
        case LayerType::Dense:
            total += l.in_channels * l.out_channels + (l.affine ? l.out_channels : 0);
            break;
        default:
            break;
        }
    }
    return total;
}

ModelSpec basic_cnn(Index classes)
{
    ModelSpec s{"basic_cnn", {3, 32, 32}, {}};
    Index in = 3;
    for (int b = 1; b <= 3; ++b)
    {
        const std::string i = std::to_string(b);
        s.layers.push_back(LayerSpec::conv("conv" + i, in, 32, 3, 2, 1));
        s.layers.push_back(LayerSpec::batch_norm("bn" + i, 32));
        s.layers.push_back(LayerSpec::relu("relu" + i));
        in = 32;
    }
    s.layers.push_back(LayerSpec::flatten());
    s.layers.push_back(LayerSpec::dense("fc", 32 * 4 * 4, classes));
    return s;
}

ModelSpec linear_probe(Shape input, Index classes)
{
    ModelSpec s{"linear_probe", input, {}};
    s.layers.push_back(LayerSpec::flatten());
    s.layers.push_back(LayerSpec::dense("fc", element_count(input), classes));
    return s;
}

ModelSpec model_by_name(const std::string& name)
{
    if (name == "basic_cnn")
        return basic_cnn();
    if (name == "linear_probe")
        return linear_probe({3, 32, 32}, 10);
    throw ShapeError("unknown model '" + name + "'");
}

// ---------------------------------------------------------------------------
// Loss
// ---------------------------------------------------------------------------

template <typename Scalar>
LossResult softmax_cross_entropy(const Matrix<Scalar>& logits, std::span<const int> labels,
                                 Matrix<Scalar>* dlogits)
{
    const Index b = logits.rows();
    const Index k = logits.cols();
    if (static_cast<Index>(labels.size()) != b || b == 0)
    {
        throw ShapeError("softmax_cross_entropy: label count does not match batch");
    }
    if (dlogits)
    {
        dlogits->resize(b, k);
    }
    LossResult r;
    double total = 0.0;
    for (Index i = 0; i < b; ++i)
    {
        const int y = labels[static_cast<std::size_t>(i)];
        if (y < 0 || y >= k)
        {
            throw ShapeError("softmax_cross_entropy: label out of range");
        }
        const auto row   = logits.row(i).template cast<double>();
        Index arg        = 0;
        const double mx  = row.maxCoeff(&arg);
        const double lse = mx + std::log((row.array() - mx).exp().sum());
        total += lse - row[y];
        if (arg == y)
        {
            ++r.correct;
        }
        if (dlogits)
        {
            for (Index j = 0; j < k; ++j)
            {
                const double p     = std::exp(row[j] - lse) - (j == y ? 1.0 : 0.0);
                (*dlogits)(i, j) = static_cast<Scalar>(p / static_cast<double>(b));
            }
        }
    }
    r.loss = total / static_cast<double>(b);
    return r;
}

template LossResult softmax_cross_entropy<float>(const Matrix<float>&, std::span<const int>, Matrix<float>*);
template LossResult softmax_cross_entropy<double>(const Matrix<double>&, std::span<const int>, Matrix<double>*);

// ---------------------------------------------------------------------------
// Layers
// ---------------------------------------------------------------------------

template <typename Scalar>
class Layer
{
  public:
    using Params = std::vector<ParamTensor<Scalar>>;

    virtual ~Layer() = default;
    virtual Tensor<Scalar> forward(const Tensor<Scalar>& x, Mode mode, Params& params,
                                   Params& buffers) = 0;
    /// Accumulates parameter gradients; returns d(loss)/d(input).
    virtual Tensor<Scalar> backward(const Tensor<Scalar>& dy, Params& params) = 0;
    virtual bool captures_activation() const { return false; }
};

namespace
{

template <typename Scalar>
using ColMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using RowMap = Eigen::Map<Matrix<Scalar>>;

template <typename Scalar>
using ConstRowMap = Eigen::Map<const Matrix<Scalar>>;

template <typename Scalar>
class Conv2d final : public Layer<Scalar>
{
  public:
    using typename Layer<Scalar>::Params;

    Conv2d(const LayerSpec& s, std::size_t weight, std::ptrdiff_t bias)
        : spec_(s), weight_(weight), bias_(bias)
    {
    }

    Tensor<Scalar> forward(const Tensor<Scalar>& x, Mode, Params& params, Params&) override
    {
        const Index b = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3];
        const Index k = spec_.kernel, s = spec_.stride, pad = spec_.padding;
        ho_ = conv_out(h, k, s, pad);
        wo_ = conv_out(w, k, s, pad);
        in_shape_ = x.shape;
        const Index hw  = ho_ * wo_;
        const Index ckk = c * k * k;

        cols_.setZero(ckk, b * hw);
        for (Index n = 0; n < b; ++n)
        {
            const Scalar* img = x.data.data() + n * c * h * w;
            for (Index oy = 0; oy < ho_; ++oy)
            {
                for (Index ox = 0; ox < wo_; ++ox)
                {
                    Scalar* col = cols_.data() + (n * hw + oy * wo_ + ox) * ckk;
                    for (Index ch = 0; ch < c; ++ch)
                    {
                        for (Index ky = 0; ky < k; ++ky)
                        {
                            const Index iy = oy * s - pad + ky;
                            if (iy < 0 || iy >= h)
                                continue;
                            for (Index kx = 0; kx < k; ++kx)
                            {
                                const Index ix = ox * s - pad + kx;
                                if (ix < 0 || ix >= w)
                                    continue;
                                col[(ch * k + ky) * k + kx] = img[(ch * h + iy) * w + ix];
                            }
                        }
                    }
                }
            }
        }

        const Index out_c = spec_.out_channels;
        ConstRowMap<Scalar> wm(params[weight_].data.data(), out_c, ckk);
        const ColMatrix<Scalar> y = wm * cols_;

        Tensor<Scalar> out({b, out_c, ho_, wo_});
        for (Index n = 0; n < b; ++n)
        {
            for (Index o = 0; o < out_c; ++o)
            {
                const Scalar bias = bias_ >= 0 ? params[static_cast<std::size_t>(bias_)].data[o] : Scalar(0);
                Scalar* dst       = out.data.data() + (n * out_c + o) * hw;
                for (Index p = 0; p < hw; ++p)
                {
                    dst[p] = y(o, n * hw + p) + bias;
                }
            }
        }
        return out;
    }

    Tensor<Scalar> backward(const Tensor<Scalar>& dy, Params& params) override
    {
        const Index b = in_shape_[0], c = in_shape_[1], h = in_shape_[2], w = in_shape_[3];
        const Index k = spec_.kernel, s = spec_.stride, pad = spec_.padding;
        const Index hw = ho_ * wo_, ckk = c * k * k, out_c = spec_.out_channels;

        ColMatrix<Scalar> dym(out_c, b * hw);
        for (Index n = 0; n < b; ++n)
        {
            for (Index o = 0; o < out_c; ++o)
            {
                const Scalar* src = dy.data.data() + (n * out_c + o) * hw;
                for (Index p = 0; p < hw; ++p)
                {
                    dym(o, n * hw + p) = src[p];
                }
            }
        }

        RowMap<Scalar>(params[weight_].grad.data(), out_c, ckk).noalias() += dym * cols_.transpose();
        if (bias_ >= 0)
        {
            params[static_cast<std::size_t>(bias_)].grad += dym.rowwise().sum();
        }

        ConstRowMap<Scalar> wm(params[weight_].data.data(), out_c, ckk);
        const ColMatrix<Scalar> dcols = wm.transpose() * dym;

        Tensor<Scalar> dx(in_shape_);
        for (Index n = 0; n < b; ++n)
        {
            Scalar* img = dx.data.data() + n * c * h * w;
            for (Index oy = 0; oy < ho_; ++oy)
            {
                for (Index ox = 0; ox < wo_; ++ox)
                {
                    const Scalar* col = dcols.data() + (n * hw + oy * wo_ + ox) * ckk;
                    for (Index ch = 0; ch < c; ++ch)
                    {
                        for (Index ky = 0; ky < k; ++ky)
                        {
                            const Index iy = oy * s - pad + ky;
                            if (iy < 0 || iy >= h)
                                continue;
                            for (Index kx = 0; kx < k; ++kx)
                            {
                                const Index ix = ox * s - pad + kx;
                                if (ix < 0 || ix >= w)
                                    continue;
                                img[(ch * h + iy) * w + ix] += col[(ch * k + ky) * k + kx];
                            }
                        }
                    }
                }
            }
        }
        return dx;
    }

  private:
    LayerSpec spec_;
    std::size_t weight_;
    std::ptrdiff_t bias_;
    Shape in_shape_;
    Index ho_ = 0, wo_ = 0;
    ColMatrix<Scalar> cols_;
};

//
// Per-channel batch normalisation over (batch, H, W). Training mode uses the
// batch statistics (biased variance) and updates running statistics with the
// unbiased variance; evaluation mode uses the running statistics only.
//
template <typename Scalar>
class BatchNorm2d final : public Layer<Scalar>
{
  public:
    using typename Layer<Scalar>::Params;
    static constexpr double eps      = 1e-5;
    static constexpr double momentum = 0.1;

    BatchNorm2d(const LayerSpec& s, std::ptrdiff_t scale, std::ptrdiff_t shift, std::size_t mean,
                std::size_t var)
        : spec_(s), scale_(scale), shift_(shift), mean_(mean), var_(var)
    {
    }

    Tensor<Scalar> forward(const Tensor<Scalar>& x, Mode mode, Params& params, Params& buffers) override
    {
        const Index b = x.shape[0], c = x.shape[1], hw = x.shape[2] * x.shape[3];
        const double m = static_cast<double>(b * hw);
        Tensor<Scalar> out(x.shape);
        xhat_       = Tensor<Scalar>(x.shape);
        inv_std_.resize(c);
        train_mode_ = mode == Mode::Train;

        for (Index ch = 0; ch < c; ++ch)
        {
            double mean = 0.0, var = 0.0;
            if (train_mode_)
            {
                for (Index n = 0; n < b; ++n)
                {
                    const Scalar* src = x.data.data() + (n * c + ch) * hw;
                    for (Index p = 0; p < hw; ++p)
                        mean += src[p];
                }
                mean /= m;
                for (Index n = 0; n < b; ++n)
                {
                    const Scalar* src = x.data.data() + (n * c + ch) * hw;
                    for (Index p = 0; p < hw; ++p)
                    {
                        const double d = src[p] - mean;
                        var += d * d;
                    }
                }
                var /= m;
                Scalar& rm = buffers[mean_].data[ch];
                Scalar& rv = buffers[var_].data[ch];
                rm = static_cast<Scalar>((1.0 - momentum) * rm + momentum * mean);
                const double unbiased = m > 1.0 ? var * m / (m - 1.0) : var;
                rv = static_cast<Scalar>((1.0 - momentum) * rv + momentum * unbiased);
            }
            else
            {
                mean = buffers[mean_].data[ch];
                var  = buffers[var_].data[ch];
            }
            const double inv = 1.0 / std::sqrt(var + eps);
            inv_std_[ch]     = inv;
            const double g   = scale_ >= 0 ? params[static_cast<std::size_t>(scale_)].data[ch] : 1.0;
            const double be  = shift_ >= 0 ? params[static_cast<std::size_t>(shift_)].data[ch] : 0.0;
            for (Index n = 0; n < b; ++n)
            {
                const Index off = (n * c + ch) * hw;
                for (Index p = 0; p < hw; ++p)
                {
                    const double xh          = (x.data[off + p] - mean) * inv;
                    xhat_.data[off + p]      = static_cast<Scalar>(xh);
                    out.data[off + p]        = static_cast<Scalar>(g * xh + be);
                }
            }
        }
        return out;
    }

    Tensor<Scalar> backward(const Tensor<Scalar>& dy, Params& params) override
    {
        if (!train_mode_)
        {
            throw std::logic_error("batch-norm backward requires a training-mode forward");
        }
        const Index b = dy.shape[0], c = dy.shape[1], hw = dy.shape[2] * dy.shape[3];
        const double m = static_cast<double>(b * hw);
        Tensor<Scalar> dx(dy.shape);
        for (Index ch = 0; ch < c; ++ch)
        {
            double sum_dy = 0.0, sum_dy_xh = 0.0;
            for (Index n = 0; n < b; ++n)
            {
                const Index off = (n * c + ch) * hw;
                for (Index p = 0; p < hw; ++p)
                {
                    sum_dy += dy.data[off + p];
                    sum_dy_xh += static_cast<double>(dy.data[off + p]) * xhat_.data[off + p];
                }
            }
            if (scale_ >= 0)
                params[static_cast<std::size_t>(scale_)].grad[ch] += static_cast<Scalar>(sum_dy_xh);
            if (shift_ >= 0)
                params[static_cast<std::size_t>(shift_)].grad[ch] += static_cast<Scalar>(sum_dy);

            const double g = scale_ >= 0 ? params[static_cast<std::size_t>(scale_)].data[ch] : 1.0;
            // dx = g * inv / m * (m * dy - sum(dy) - xhat * sum(dy * xhat))
            const double coef = g * inv_std_[ch] / m;
            for (Index n = 0; n < b; ++n)
            {
                const Index off = (n * c + ch) * hw;
                for (Index p = 0; p < hw; ++p)
                {
                    dx.data[off + p] = static_cast<Scalar>(
                        coef * (m * dy.data[off + p] - sum_dy - xhat_.data[off + p] * sum_dy_xh));
                }
            }
        }
        return dx;
    }

  private:
    LayerSpec spec_;
    std::ptrdiff_t scale_, shift_;
    std::size_t mean_, var_;
    Tensor<Scalar> xhat_;
    Vector<double> inv_std_;
    bool train_mode_ = false;
};

template <typename Scalar>
class Relu final : public Layer<Scalar>
{
  public:
    using typename Layer<Scalar>::Params;

    Tensor<Scalar> forward(const Tensor<Scalar>& x, Mode, Params&, Params&) override
    {
        Tensor<Scalar> out(x.shape, x.data.cwiseMax(Scalar(0)));
        active_ = (x.data.array() > Scalar(0));
        return out;
    }

    Tensor<Scalar> backward(const Tensor<Scalar>& dy, Params&) override
    {
        Tensor<Scalar> dx(dy.shape);
        dx.data = active_.select(dy.data, Scalar(0));
        return dx;
    }

    bool captures_activation() const override { return true; }

  private:
    Eigen::Array<bool, Eigen::Dynamic, 1> active_;
};

template <typename Scalar>
class Flatten final : public Layer<Scalar>
{
  public:
    using typename Layer<Scalar>::Params;

    Tensor<Scalar> forward(const Tensor<Scalar>& x, Mode, Params&, Params&) override
    {
        in_shape_ = x.shape;
        return Tensor<Scalar>({x.shape[0], x.data.size() / x.shape[0]}, x.data);
    }

    Tensor<Scalar> backward(const Tensor<Scalar>& dy, Params&) override
    {
        return Tensor<Scalar>(in_shape_, dy.data);
    }

  private:
    Shape in_shape_;
};

//
// y = x W + b with W stored [in, out], so each column of W is one output
// unit's weights (the component layout is already P x N).
//
template <typename Scalar>
class Dense final : public Layer<Scalar>
{
  public:
    using typename Layer<Scalar>::Params;

    Dense(const LayerSpec& s, std::size_t weight, std::ptrdiff_t bias)
        : spec_(s), weight_(weight), bias_(bias)
    {
    }

    Tensor<Scalar> forward(const Tensor<Scalar>& x, Mode, Params& params, Params&) override
    {
        const Index b = x.shape[0], in = spec_.in_channels, out = spec_.out_channels;
        x_ = x;
        Tensor<Scalar> y({b, out});
        RowMap<Scalar> ym(y.data.data(), b, out);
        ym.noalias() = ConstRowMap<Scalar>(x.data.data(), b, in) *
                       ConstRowMap<Scalar>(params[weight_].data.data(), in, out);
        if (bias_ >= 0)
        {
            ym.rowwise() += params[static_cast<std::size_t>(bias_)].data.transpose();
        }
        return y;
    }

    Tensor<Scalar> backward(const Tensor<Scalar>& dy, Params& params) override
    {
        const Index b = x_.shape[0], in = spec_.in_channels, out = spec_.out_channels;
        ConstRowMap<Scalar> dym(dy.data.data(), b, out);
        ConstRowMap<Scalar> xm(x_.data.data(), b, in);
        RowMap<Scalar>(params[weight_].grad.data(), in, out).noalias() += xm.transpose() * dym;
        if (bias_ >= 0)
        {
            params[static_cast<std::size_t>(bias_)].grad += dym.colwise().sum().transpose();
        }
        Tensor<Scalar> dx(x_.shape);
        RowMap<Scalar>(dx.data.data(), b, in).noalias() =
            dym * ConstRowMap<Scalar>(params[weight_].data.data(), in, out).transpose();
        return dx;
    }

  private:
    LayerSpec spec_;
    std::size_t weight_;
    std::ptrdiff_t bias_;
    Tensor<Scalar> x_;
};

} // namespace

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

template <typename Scalar>
Model<Scalar>::Model(ModelSpec spec) : spec_(std::move(spec))
{
    spec_.validate();
    auto add = [this](std::string name, Shape shape, ParamKind kind) {
        params_.push_back(make_param<Scalar>(std::move(name), std::move(shape), kind));
        return static_cast<std::ptrdiff_t>(params_.size() - 1);
    };
    for (const LayerSpec& l : spec_.layers)
    {
        switch (l.type)
        {
        case LayerType::Conv2d:
        {
            const auto w = add(l.name + ".weight", {l.out_channels, l.in_channels, l.kernel, l.kernel},
                               ParamKind::ConvWeight);
            const auto b = l.affine ? add(l.name + ".bias", {l.out_channels}, ParamKind::Vector) : -1;
            layers_.push_back(std::make_unique<Conv2d<Scalar>>(l, static_cast<std::size_t>(w), b));
            break;
        }
        case LayerType::BatchNorm2d:
        {
            const auto g = l.affine ? add(l.name + ".weight", {l.in_channels}, ParamKind::Vector) : -1;
            const auto b = l.affine ? add(l.name + ".bias", {l.in_channels}, ParamKind::Vector) : -1;
            buffers_.push_back(make_param<Scalar>(l.name + ".running_mean", {l.in_channels}, ParamKind::Vector));
            buffers_.push_back(make_param<Scalar>(l.name + ".running_var", {l.in_channels}, ParamKind::Vector));
            layers_.push_back(std::make_unique<BatchNorm2d<Scalar>>(l, g, b, buffers_.size() - 2,
                                                                    buffers_.size() - 1));
            break;
        }
        case LayerType::ReLU:
            layers_.push_back(std::make_unique<Relu<Scalar>>());
            break;
        case LayerType::Flatten:
            layers_.push_back(std::make_unique<Flatten<Scalar>>());
            break;
        case LayerType::Dense:
        {
            const auto w = add(l.name + ".weight", {l.in_channels, l.out_channels}, ParamKind::DenseWeight);
            const auto b = l.affine ? add(l.name + ".bias", {l.out_channels}, ParamKind::Vector) : -1;
            layers_.push_back(std::make_unique<Dense<Scalar>>(l, static_cast<std::size_t>(w), b));
            break;
        }
        }
    }
    init_params(0);
}

template <typename Scalar>
Model<Scalar>::~Model() = default;
template <typename Scalar>
Model<Scalar>::Model(Model&&) noexcept = default;
template <typename Scalar>
Model<Scalar>& Model<Scalar>::operator=(Model&&) noexcept = default;

template <typename Scalar>
void Model<Scalar>::init_params(std::uint64_t seed)
{
    const Rng root(seed);
    for (std::size_t i = 0; i < params_.size(); ++i)
    {
        ParamTensor<Scalar>& p = params_[i];
        p.grad.setZero();
        if (p.layout)
        {
            Rng rng           = root.split(i);
            const double bound = std::sqrt(1.0 / static_cast<double>(p.layout->p));
            for (Index k = 0; k < p.size(); ++k)
            {
                p.data[k] = static_cast<Scalar>(rng.uniform(-bound, bound));
            }
        }
        else
        {
            const bool bn_scale = p.name.ends_with(".weight");
            p.data.setConstant(bn_scale ? Scalar(1) : Scalar(0));
        }
    }
    for (ParamTensor<Scalar>& b : buffers_)
    {
        const bool is_var = b.name.ends_with(".running_var");
        b.data.setConstant(is_var ? Scalar(1) : Scalar(0));
    }
    have_train_cache_ = false;
}

template <typename Scalar>
ForwardResult<Scalar> Model<Scalar>::forward(const Tensor<Scalar>& batch, Mode mode,
                                             bool record_activations)
{
    if (batch.shape.size() != spec_.input.size() + 1 ||
        !std::equal(spec_.input.begin(), spec_.input.end(), batch.shape.begin() + 1))
    {
        throw ShapeError("model '" + spec_.name + "' expects input (B, " +
                         shape_str(spec_.input).substr(1) + " but got " + shape_str(batch.shape));
    }
    ForwardResult<Scalar> out;
    Tensor<Scalar> x = batch;
    Index captured   = 0;
    for (std::size_t i = 0; i < layers_.size(); ++i)
    {
        x = layers_[i]->forward(x, mode, params_, buffers_);
        if (layers_[i]->captures_activation())
        {
            ++captured;
            if (record_activations)
            {
                // Name the activation after the layer that produced the components.
                const std::string& src = i >= 2 && spec_.layers[i - 1].type == LayerType::BatchNorm2d
                                             ? spec_.layers[i - 2].name
                                             : (i >= 1 ? spec_.layers[i - 1].name : spec_.layers[i].name);
                out.activations.push_back({captured, src, x});
            }
        }
    }
    out.logits = ConstRowMap<Scalar>(x.data.data(), x.shape[0], x.shape[1]);
    logits_    = out.logits;
    have_train_cache_ = mode == Mode::Train;
    return out;
}

template <typename Scalar>
LossResult Model<Scalar>::backward(std::span<const int> labels)
{
    if (!have_train_cache_)
    {
        throw std::logic_error("backward requires a preceding training-mode forward");
    }
    Matrix<Scalar> dlogits;
    const LossResult r = softmax_cross_entropy(logits_, labels, &dlogits);
    for (ParamTensor<Scalar>& p : params_)
    {
        p.grad.setZero();
    }
    Tensor<Scalar> dy({dlogits.rows(), dlogits.cols()},
                      Eigen::Map<const Vector<Scalar>>(dlogits.data(), dlogits.size()));
    for (std::size_t i = layers_.size(); i-- > 0;)
    {
        dy = layers_[i]->backward(dy, params_);
    }
    input_grad_ = std::move(dy);
    return r;
}

template class Model<float>;
template class Model<double>;

} // namespace orthograd
