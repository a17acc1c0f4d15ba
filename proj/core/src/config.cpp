#include "mrgf/config.hpp"
