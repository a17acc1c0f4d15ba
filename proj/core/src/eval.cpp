#include "mrgf/eval.hpp"
