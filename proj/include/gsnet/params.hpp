#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "gsnet/autograd.hpp"

namespace gsnet {

/// Seeded generator with platform-independent draws (the standard
/// distributions are implementation-defined, so we roll our own).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }
    /// Uniform in [0, 1).
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    double normal();
    std::int64_t below(std::int64_t n);

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

enum class ParamGroup { Generalist, Specialist, Head };

const char* group_name(ParamGroup g);

enum class Init { Zeros, Ones, TruncNormal, KaimingUniform };

template <typename T>
struct Parameter {
    std::string name;
    Var<T> var;
    ParamGroup group = ParamGroup::Head;

    bool trainable() const { return var.requires_grad(); }
    /// Frozen parameters drop any gradient and stop accumulating.
    void set_trainable(bool on);
    const Tensor<T>& value() const { return var.value(); }
    Tensor<T>& mutable_value() { return var.mutable_value(); }
};

/// Owns every parameter of a model, keyed by dotted name. Iteration is in
/// name order, which makes checkpoints and optimizer sweeps deterministic.
template <typename T>
class ParameterStore {
public:
    ParameterStore() = default;
    ParameterStore(const ParameterStore&) = delete;
    ParameterStore& operator=(const ParameterStore&) = delete;

    /// fan_in is only used by KaimingUniform.
    Parameter<T>& create(const std::string& name, Shape shape, ParamGroup group, Init init, Rng& rng,
                         std::int64_t fan_in = 0);

    Parameter<T>* find(const std::string& name);
    const Parameter<T>* find(const std::string& name) const;
    Parameter<T>& at(const std::string& name);

    std::vector<Parameter<T>*> all();
    std::vector<const Parameter<T>*> all() const;
    std::vector<Parameter<T>*> trainable();
    std::size_t size() const { return params_.size(); }

    void zero_grad();

private:
    std::map<std::string, std::unique_ptr<Parameter<T>>> params_;
};

extern template struct Parameter<float>;
extern template struct Parameter<double>;
extern template class ParameterStore<float>;
extern template class ParameterStore<double>;

}  // namespace gsnet
