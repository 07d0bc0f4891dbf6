#pragma once

#include "dlnn/activation.hpp"
#include "dlnn/checkpoint.hpp"
#include "dlnn/config.hpp"
#include "dlnn/datagen.hpp"
#include "dlnn/dataset.hpp"
#include "dlnn/derivatives.hpp"
#include "dlnn/error.hpp"
#include "dlnn/evolve.hpp"
#include "dlnn/experiments.hpp"
#include "dlnn/lagrangian.hpp"
#include "dlnn/linalg.hpp"
#include "dlnn/network.hpp"
#include "dlnn/oracle.hpp"
#include "dlnn/tape.hpp"
#include "dlnn/train.hpp"
#include "dlnn/trajectory.hpp"
