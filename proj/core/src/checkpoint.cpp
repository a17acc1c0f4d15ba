#include "mrgf/checkpoint.hpp"
