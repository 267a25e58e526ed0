let db;

beforeAll(async () => {
  db = await connect();
});

afterAll(() => db.close());

describe('queries', () => {
  beforeEach(() => db.reset());
  afterEach(() => {
    jest.clearAllMocks();
  });

  test('select', async () => {
    expect(await db.query('select 1')).toEqual([1]);
  });

  test('insert', async () => {
    await db.insert({ id: 1 });
  });
});
