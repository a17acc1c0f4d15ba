#include "mrgf/data.hpp"
