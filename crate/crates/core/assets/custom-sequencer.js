// Test sequencer that runs suites in a caller-supplied order.
//
// The order is a comma-separated list of absolute suite paths, read from a
// `--order=` process argument or, failing that, the JSTOD_ORDER environment
// variable. Listed suites run first, in the listed order; unlisted suites
// follow in their original relative order.
'use strict';

const path = require('path');

function loadBase() {
  const req = (id) => require(require.resolve(id, { paths: [process.cwd(), __dirname] }));
  const mod = req('@jest/test-sequencer');
  return mod.default || mod;
}

function readOrder(argv, env) {
  const arg = argv.find((a) => a.startsWith('--order='));
  const raw = arg !== undefined ? arg.slice('--order='.length) : env.JSTOD_ORDER;
  if (raw === undefined) {
    return null;
  }
  return raw
    .replace(/^'|'$/g, '')
    .split(',')
    .filter((p) => p.length > 0);
}

function orderSuites(tests, order) {
  if (!order) {
    return tests.slice();
  }
  const rank = new Map();
  order.forEach((p, i) => {
    if (!rank.has(p)) rank.set(p, i);
  });
  return tests
    .map((t, i) => ({ t, i, r: rank.has(t.path) ? rank.get(t.path) : Infinity }))
    .sort((a, b) => (a.r === b.r ? a.i - b.i : a.r < b.r ? -1 : 1))
    .map((x) => x.t);
}

const Base = loadBase();

class CustomSequencer extends Base {
  sort(tests) {
    const order = readOrder(process.argv, process.env);
    if (!order) {
      process.stderr.write('jstod sequencer: no --order or JSTOD_ORDER given; keeping runner order\n');
    }
    return orderSuites(Array.from(tests), order);
  }
}

module.exports = CustomSequencer;
module.exports.orderSuites = orderSuites;
module.exports.readOrder = readOrder;
module.exports.normalize = (p) => path.resolve(p);
