#pragma once

#include "tcprobe/backend.hpp"
#include "tcprobe/classifier.hpp"
#include "tcprobe/datasets.hpp"
#include "tcprobe/descriptor.hpp"
#include "tcprobe/error.hpp"
#include "tcprobe/grammar.hpp"
#include "tcprobe/grammars.hpp"
#include "tcprobe/hierarchy.hpp"
#include "tcprobe/metrics.hpp"
#include "tcprobe/oracle.hpp"
#include "tcprobe/types.hpp"
#include "tcprobe/wire.hpp"
#include "tcprobe/wordseg.hpp"
