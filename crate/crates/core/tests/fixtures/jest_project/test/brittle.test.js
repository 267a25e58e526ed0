let body = null;

test('first test', () => {
  body = { name: 'x' };
  expect(body).toBeTruthy();
});

test('second test', () => {
  expect(body.name).toBe('x');
});
