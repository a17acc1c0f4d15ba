#include "mrgf/layers.hpp"
#include "mrgf/losses.hpp"
#include "mrgf/nn_ops.hpp"
#include "mrgf/optim.hpp"
#include "mrgf/tensor.hpp"
