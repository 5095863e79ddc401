#ifndef ORTHOGRAD_NN_HPP
#define ORTHOGRAD_NN_HPP

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "orthograd/linalg.hpp"
#include "orthograd/param.hpp"

namespace orthograd
{

/// Dense row-major tensor: shape plus flat storage.
template <typename Scalar>
struct Tensor
{
    Shape shape;
    Vector<Scalar> data;

    Tensor() = default;
    explicit Tensor(Shape s) : shape(std::move(s)), data(Vector<Scalar>::Zero(element_count(shape))) {}
    Tensor(Shape s, Vector<Scalar> d) : shape(std::move(s)), data(std::move(d))
    {
        if (data.size() != element_count(shape))
        {
            throw ShapeError("tensor data length does not match its shape");
        }
    }
};

enum class LayerType
{
    Conv2d,
    BatchNorm2d,
    ReLU,
    Flatten,
    Dense,
};

struct LayerSpec
{
    LayerType type;
    std::string name;
    Index in_channels  = 0; // conv, batch-norm (channels), dense (in features)
    Index out_channels = 0; // conv, dense (out features)
    Index kernel       = 0;
    Index stride       = 1;
    Index padding      = 0;
    bool affine        = true; // batch-norm scale/shift, conv/dense bias

    static LayerSpec conv(std::string name, Index in, Index out, Index kernel, Index stride,
                          Index padding, bool bias = true);
    static LayerSpec batch_norm(std::string name, Index channels, bool affine = true);
    static LayerSpec relu(std::string name = "relu");
    static LayerSpec flatten();
    static LayerSpec dense(std::string name, Index in, Index out, bool bias = true);
};

//
// Ordered layer descriptors plus the per-sample input shape (C, H, W) or (F).
// `validate` walks the stack and throws ShapeError at the first layer whose
// input does not match the previous output.
//
struct ModelSpec
{
    std::string name;
    Shape input;
    std::vector<LayerSpec> layers;

    /// Per-sample output shape of every layer, in order.
    std::vector<Shape> layer_output_shapes() const;
    Shape output_shape() const;
    Index parameter_count() const;
    void validate() const { (void)layer_output_shapes(); }
};

/// Three stride-2 3x3 conv / batch-norm / ReLU blocks (3->32->32->32) and a
/// 512->10 dense head on 3x32x32 input. 24,714 parameters.
ModelSpec basic_cnn(Index classes = 10);

/// Flatten + one dense layer.
ModelSpec linear_probe(Shape input, Index classes);

ModelSpec model_by_name(const std::string& name);

enum class Mode
{
    Train,
    Eval,
};

/// Output of one component layer (channels or units), captured at a ReLU.
template <typename Scalar>
struct LayerActivation
{
    Index layer = 0; // 1-based index among captured layers
    std::string name;
    Tensor<Scalar> values; // (batch, N_l, spatial...)

    Index components() const { return values.shape.size() > 1 ? values.shape[1] : 0; }
};

template <typename Scalar>
struct ForwardResult
{
    Matrix<Scalar> logits; // batch x classes
    std::vector<LayerActivation<Scalar>> activations;
};

struct LossResult
{
    double loss = 0.0;
    Index correct = 0;
};

//
// Mean softmax cross-entropy with log-sum-exp stabilisation. Writes
// d(loss)/d(logits) into `dlogits` when non-null.
//
template <typename Scalar>
LossResult softmax_cross_entropy(const Matrix<Scalar>& logits, std::span<const int> labels,
                                 Matrix<Scalar>* dlogits);

template <typename Scalar>
class Layer;

template <typename Scalar>
class Model
{
  public:
    explicit Model(ModelSpec spec);
    ~Model();
    Model(Model&&) noexcept;
    Model& operator=(Model&&) noexcept;
    Model(const Model&)            = delete;
    Model& operator=(const Model&) = delete;

    const ModelSpec& spec() const { return spec_; }

    std::vector<ParamTensor<Scalar>>& params() { return params_; }
    const std::vector<ParamTensor<Scalar>>& params() const { return params_; }

    /// Non-trainable state (batch-norm running statistics).
    std::vector<ParamTensor<Scalar>>& buffers() { return buffers_; }
    const std::vector<ParamTensor<Scalar>>& buffers() const { return buffers_; }

    //
    // Fan-in uniform weights (bound sqrt(1 / fan_in)), zero biases,
    // batch-norm scale one and shift zero. Fully determined by `seed`.
    //
    void init_params(std::uint64_t seed);

    /// `batch` is (B, input...). Caches what backward needs.
    ForwardResult<Scalar> forward(const Tensor<Scalar>& batch, Mode mode,
                                  bool record_activations = false);

    //
    // Reverse pass from the last forward (which must have been Train mode).
    // Overwrites every parameter gradient and returns the mean loss.
    //
    LossResult backward(std::span<const int> labels);

    /// d(loss)/d(input) from the last backward.
    const Tensor<Scalar>& input_grad() const { return input_grad_; }

  private:
    ModelSpec spec_;
    std::vector<ParamTensor<Scalar>> params_;
    std::vector<ParamTensor<Scalar>> buffers_;
    std::vector<std::unique_ptr<Layer<Scalar>>> layers_;
    Matrix<Scalar> logits_;
    Tensor<Scalar> input_grad_;
    bool have_train_cache_ = false;
};

extern template class Model<float>;
extern template class Model<double>;

//
// Parameter dump: little-endian, magic "OGPD", u32 version, u32 tensor count,
// then per tensor (u32 name length, name bytes, u32 rank, u64 dims...), then
// the payload of every tensor as f64 in declaration order.
//
template <typename Scalar>
void save_params(const std::string& path, const std::vector<ParamTensor<Scalar>>& tensors);

/// Loads into `tensors`, which must match the stored names and shapes.
template <typename Scalar>
void load_params(const std::string& path, std::vector<ParamTensor<Scalar>>& tensors);

} // namespace orthograd

#endif // ORTHOGRAD_NN_HPP
