#include "mrgf/train.hpp"
