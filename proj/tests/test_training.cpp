#include <doctest.h>
#include "cupi/training.hpp"
