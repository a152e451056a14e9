"""Fault-injection double for the HTTP backend."""

import json

import httpx


def ok_body(content=None, tool=None, usage=(11, 7)):
    message = {"role": "assistant", "content": content}
    if tool is not None:
        name, args = tool
        message["tool_calls"] = [{"id": "c1", "type": "function",
                                  "function": {"name": name, "arguments": json.dumps(args)}}]
    body = {"choices": [{"message": message}]}
    if usage is not None:
        body["usage"] = {"prompt_tokens": usage[0], "completion_tokens": usage[1]}
    return body


class FaultServer:
    """Plays a script of outcomes: an int status, "timeout", "reset", or a JSON body."""

    def __init__(self, script):
        self.script = list(script)
        self.calls = []

    def __call__(self, request: httpx.Request) -> httpx.Response:
        self.calls.append(request)
        item = self.script.pop(0) if self.script else 500
        if item == "timeout":
            raise httpx.ReadTimeout("simulated timeout", request=request)
        if item == "reset":
            raise httpx.ConnectError("simulated reset", request=request)
        if isinstance(item, int):
            return httpx.Response(item, json={"error": {"message": f"status {item}"}})
        return httpx.Response(200, json=item)

    def client(self):
        return httpx.Client(transport=httpx.MockTransport(self))
