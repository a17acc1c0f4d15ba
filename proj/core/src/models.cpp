#include "mrgf/models.hpp"
