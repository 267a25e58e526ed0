describe.each([
  [1, 1, 2],
  [1, 2, 3],
])('add(%i, %i)', (a, b, expected) => {
  test(`returns ${expected}`, () => {
    expect(a + b).toBe(expected);
  });
  test('is a number', () => {
    expect(typeof (a + b)).toBe('number');
  });
});

test.each`
  a    | b    | expected
  ${1} | ${1} | ${2}
  ${2} | ${1} | ${3}
`('returns $expected when $a is added $b', ({ a, b, expected }) => {
  expect(a + b).toBe(expected);
});

it.each(['x', 'y'])('handles %s', (v) => {
  expect(v).toBeTruthy();
});
