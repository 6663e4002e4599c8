#include <doctest.h>
#include "cupi/config.hpp"
