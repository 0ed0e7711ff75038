/* Scripted session driver: exercises the exact browser flow without a
 * browser. Usage:
 *
 *   node dist/scripts/headless.js <base-url> <subject-id> <score,score,...>
 *
 * Scores are consumed in presentation order; the driver prints one line per
 * submission and the export URL at the end. Exits nonzero on failure.
 */

import { ApiClient } from "../src/api.js";
import { runSession } from "../src/session.js";

async function main(): Promise<void> {
  const [baseUrl, subjectId, scoreList] = process.argv.slice(2);
  if (!baseUrl || !subjectId || !scoreList) {
    console.error("usage: headless.js <base-url> <subject-id> <score,score,...>");
    process.exit(2);
  }
  const scores = scoreList.split(",").map((s) => Number(s));
  const api = new ApiClient(baseUrl);
  const session = await api.createSession(subjectId);
  let cursor = 0;

  const result = await runSession(api, session.session_id, {
    present: async (stimulus) => {
      if (cursor >= scores.length) {
        throw new Error(`ran out of scripted scores at item ${cursor + 1}`);
      }
      const score = scores[cursor++];
      console.log(
        `item ${stimulus.progress.done + 1}/${stimulus.progress.total} ` +
        `${stimulus.stimulus_id} -> ${score}`,
      );
      return score;
    },
    completed: (exportUrl, submitted) => {
      console.log(`completed: ${submitted} ratings, export at ${exportUrl}`);
    },
    notify: (message) => console.error(`note: ${message}`),
  });
  console.log(`submitted=${result.submitted} skipped=${result.skipped}`);
}

main().catch((err) => {
  console.error(String(err));
  process.exit(1);
});
