#pragma once

#include "arelink/augment.hpp"
#include "arelink/colour.hpp"
#include "arelink/errors.hpp"
#include "arelink/fit.hpp"
#include "arelink/formula.hpp"
#include "arelink/geojson.hpp"
#include "arelink/geom.hpp"
#include "arelink/mrf.hpp"
#include "arelink/nb.hpp"
#include "arelink/nb_io.hpp"
#include "arelink/render.hpp"
