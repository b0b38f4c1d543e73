#include "skinseg/nn.hpp"

namespace skinseg::nn {

template class Tensor<float>;
template class Tensor<double>;
template class ParamStore<float>;
template class ParamStore<double>;
template class Graph<float>;
template class Graph<double>;

}  // namespace skinseg::nn
