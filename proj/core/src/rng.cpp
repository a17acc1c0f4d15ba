#include "mrgf/rng.hpp"
