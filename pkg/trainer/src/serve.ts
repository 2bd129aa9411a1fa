import * as readline from "node:readline";
import { TrainerSession, TrainingError } from "./train";
import { encodeResponse, failedResponse, okResponse, parseRequest } from "./protocol";

/**
 * Request loop: one UTF-8 JSON object per LF-terminated line on stdin, one
 * response line on stdout per input line, in order. Requests are processed
 * strictly sequentially; parallelism comes from running several trainer
 * processes. All diagnostics go to stderr.
 */
export async function serve(
  input: NodeJS.ReadableStream = process.stdin,
  output: NodeJS.WritableStream = process.stdout
): Promise<void> {
  const session = new TrainerSession();
  const lines = readline.createInterface({ input, crlfDelay: Infinity });
  for await (const line of lines) {
    let response;
    const parsed = parseRequest(line);
    if (!parsed.request) {
      response = failedResponse(parsed.id, parsed.error ?? "parse: invalid request");
    } else {
      try {
        const metrics = await session.handle(parsed.request);
        response = okResponse(parsed.id, metrics);
      } catch (exc) {
        const reason =
          exc instanceof TrainingError ? exc.message : `internal: ${(exc as Error).message}`;
        console.error(`[trainer] request ${parsed.id} failed: ${reason}`);
        response = failedResponse(parsed.id, reason);
      }
    }
    output.write(encodeResponse(response));
  }
}
