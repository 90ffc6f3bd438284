// SPDX-License-Identifier: Apache-2.0
//
// Retail world behaviors: users, products with variant items, and orders
// moving through pending / processed / delivered / cancelled.

#include "mtrl/tools.hpp"

#include <algorithm>
#include <cmath>
#include <variant>

namespace mtrl
{
namespace
{

std::string str_arg(const Json& args, const char* key)
{
    auto it = args.find(key);
    return it != args.end() && it->is_string() ? it->get<std::string>() : std::string{};
}

std::vector<std::string> str_list_arg(const Json& args, const char* key)
{
    std::vector<std::string> out;
    if (auto it = args.find(key); it != args.end() && it->is_array())
        for (const auto& v: *it)
            out.push_back(v.is_string() ? v.get<std::string>() : v.dump());
    return out;
}

const Json* find_in(const Json& db, const char* table, const std::string& id)
{
    auto t = db.find(table);
    if (t == db.end())
        return nullptr;
    auto r = t->find(id);
    return r == t->end() ? nullptr : &*r;
}

const Json* user_payment_method(const Json& db, const Json& order, const std::string& method_id)
{
    const Json* user = find_in(db, "users", order.value("user_id", ""));
    if (user == nullptr)
        return nullptr;
    auto pm = user->find("payment_methods");
    if (pm == user->end() || !pm->contains(method_id))
        return nullptr;
    return &(*pm)[method_id];
}

bool is_gift_card(const Json& method)
{
    return method.value("source", "") == "gift_card";
}

ToolResult find_user_id_by_email(const Json& args, ToolContext& ctx)
{
    const auto email = str_arg(args, "email");
    for (auto& [id, user]: ctx.read().at("users").items())
        if (user.value("email", "") == email)
            return ToolResult::success(id);
    return ToolResult::failure("Error: User not found");
}

ToolResult find_user_id_by_name_zip(const Json& args, ToolContext& ctx)
{
    const auto first = str_arg(args, "first_name");
    const auto last = str_arg(args, "last_name");
    const auto zip = str_arg(args, "zip");
    for (auto& [id, user]: ctx.read().at("users").items())
    {
        const Json& name = user.at("name");
        if (name.value("first_name", "") == first && name.value("last_name", "") == last
            && user.at("address").value("zip", "") == zip)
            return ToolResult::success(id);
    }
    return ToolResult::failure("Error: User not found");
}

ToolResult get_user_details(const Json& args, ToolContext& ctx)
{
    const Json* user = find_in(ctx.read(), "users", str_arg(args, "user_id"));
    return user ? ToolResult::success(*user) : ToolResult::failure("Error: User not found");
}

ToolResult get_order_details(const Json& args, ToolContext& ctx)
{
    const Json* order = find_in(ctx.read(), "orders", str_arg(args, "order_id"));
    return order ? ToolResult::success(*order) : ToolResult::failure("Error: Order not found");
}

ToolResult get_product_details(const Json& args, ToolContext& ctx)
{
    const Json* product = find_in(ctx.read(), "products", str_arg(args, "product_id"));
    return product ? ToolResult::success(*product) : ToolResult::failure("Error: Product not found");
}

ToolResult list_all_product_types(const Json&, ToolContext& ctx)
{
    Json out = Json::object();
    for (auto& [id, product]: ctx.read().at("products").items())
        out[product.value("name", id)] = id;
    return ToolResult::success(out);
}

ToolResult cancel_pending_order(const Json& args, ToolContext& ctx)
{
    const auto order_id = str_arg(args, "order_id");
    const Json* order = find_in(ctx.read(), "orders", order_id);
    if (order == nullptr)
        return ToolResult::failure("Error: Order not found");
    if (order->value("status", "") != "pending")
        return ToolResult::failure("Error: Non-pending order cannot be cancelled");
    const auto reason = str_arg(args, "reason");
    if (reason != "no longer needed" && reason != "ordered by mistake")
        return ToolResult::failure("Error: Invalid reason");

    Json& db = ctx.write();
    Json& o = db["orders"][order_id];
    Json refunds = Json::array();
    for (const auto& payment: o["payment_history"])
    {
        if (payment.value("transaction_type", "") != "payment")
            continue;
        const std::string method_id = payment.value("payment_method_id", "");
        const double amount = payment.value("amount", 0.0);
        refunds.push_back(Json{{"transaction_type", "refund"}, {"amount", amount}, {"payment_method_id", method_id}});
        Json& user = db["users"][o.value("user_id", "")];
        if (user.contains("payment_methods") && user["payment_methods"].contains(method_id)
            && is_gift_card(user["payment_methods"][method_id]))
        {
            Json& card = user["payment_methods"][method_id];
            card["balance"] = card.value("balance", 0.0) + amount;
        }
    }
    for (auto& r: refunds)
        o["payment_history"].push_back(std::move(r));
    o["status"] = "cancelled";
    o["cancel_reason"] = reason;
    return ToolResult::success(o);
}

/// Shared by modify-items and exchange: checks each old item is in the order
/// and each new item is an available variant of the same product, and returns
/// the price difference sum(new) - sum(old).
std::variant<double, std::string> item_swap_difference(const Json& db, const Json& order, const std::vector<std::string>& item_ids,
                                                       const std::vector<std::string>& new_item_ids)
{
    if (item_ids.size() != new_item_ids.size() || item_ids.empty())
        return std::string("Error: The number of items to be exchanged should match");
    std::vector<std::string> remaining;
    for (const auto& item: order.at("items"))
        remaining.push_back(item.value("item_id", ""));
    double old_total = 0.0;
    double new_total = 0.0;
    for (std::size_t i = 0; i < item_ids.size(); ++i)
    {
        auto pos = std::find(remaining.begin(), remaining.end(), item_ids[i]);
        if (pos == remaining.end())
            return "Error: Item " + item_ids[i] + " not found";
        remaining.erase(pos);
        const Json* old_item = nullptr;
        for (const auto& item: order.at("items"))
            if (item.value("item_id", "") == item_ids[i])
                old_item = &item;
        const Json* product = find_in(db, "products", old_item->value("product_id", ""));
        if (product == nullptr)
            return std::string("Error: Product not found");
        const auto& variants = product->at("variants");
        if (!variants.contains(new_item_ids[i]) || !variants[new_item_ids[i]].value("available", false))
            return "Error: New item " + new_item_ids[i] + " not found or available";
        if (new_item_ids[i] == item_ids[i])
            return std::string("Error: The new item id should be different from the old item id");
        old_total += old_item->value("price", 0.0);
        new_total += variants[new_item_ids[i]].value("price", 0.0);
    }
    return new_total - old_total;
}

ToolResult modify_pending_order_items(const Json& args, ToolContext& ctx)
{
    const auto order_id = str_arg(args, "order_id");
    const Json* order = find_in(ctx.read(), "orders", order_id);
    if (order == nullptr)
        return ToolResult::failure("Error: Order not found");
    if (order->value("status", "") != "pending")
        return ToolResult::failure("Error: Non-pending order cannot be modified");

    const auto item_ids = str_list_arg(args, "item_ids");
    const auto new_item_ids = str_list_arg(args, "new_item_ids");
    auto diff = item_swap_difference(ctx.read(), *order, item_ids, new_item_ids);
    if (auto* err = std::get_if<std::string>(&diff))
        return ToolResult::failure(*err);
    const double price_diff = std::get<double>(diff);

    const auto method_id = str_arg(args, "payment_method_id");
    const Json* method = user_payment_method(ctx.read(), *order, method_id);
    if (method == nullptr)
        return ToolResult::failure("Error: Payment method not found");
    if (is_gift_card(*method) && method->value("balance", 0.0) < price_diff)
        return ToolResult::failure("Error: Insufficient gift card balance to pay for the price difference");

    Json& db = ctx.write();
    Json& o = db["orders"][order_id];
    o["payment_history"].push_back(Json{
        {"transaction_type", price_diff > 0 ? "payment" : "refund"},
        {"amount", std::fabs(price_diff)},
        {"payment_method_id", method_id},
    });
    if (is_gift_card(*method))
    {
        Json& card = db["users"][o.value("user_id", "")]["payment_methods"][method_id];
        card["balance"] = card.value("balance", 0.0) - price_diff;
    }
    for (std::size_t i = 0; i < item_ids.size(); ++i)
    {
        for (auto& item: o["items"])
        {
            if (item.value("item_id", "") != item_ids[i])
                continue;
            const Json& variant = db["products"][item.value("product_id", "")]["variants"][new_item_ids[i]];
            item["item_id"] = new_item_ids[i];
            item["price"] = variant["price"];
            item["options"] = variant["options"];
            break;
        }
    }
    o["status"] = "pending (item modified)";
    return ToolResult::success(o);
}

ToolResult modify_pending_order_address(const Json& args, ToolContext& ctx)
{
    const auto order_id = str_arg(args, "order_id");
    const Json* order = find_in(ctx.read(), "orders", order_id);
    if (order == nullptr)
        return ToolResult::failure("Error: Order not found");
    if (order->value("status", "") != "pending")
        return ToolResult::failure("Error: Non-pending order cannot be modified");
    Json& o = ctx.write()["orders"][order_id];
    o["address"] = Json{
        {"address1", str_arg(args, "address1")}, {"address2", str_arg(args, "address2")}, {"city", str_arg(args, "city")},
        {"state", str_arg(args, "state")},       {"country", str_arg(args, "country")},   {"zip", str_arg(args, "zip")},
    };
    return ToolResult::success(o);
}

ToolResult modify_pending_order_payment(const Json& args, ToolContext& ctx)
{
    const auto order_id = str_arg(args, "order_id");
    const Json* order = find_in(ctx.read(), "orders", order_id);
    if (order == nullptr)
        return ToolResult::failure("Error: Order not found");
    if (order->value("status", "") != "pending")
        return ToolResult::failure("Error: Non-pending order cannot be modified");
    const auto method_id = str_arg(args, "payment_method_id");
    const Json* method = user_payment_method(ctx.read(), *order, method_id);
    if (method == nullptr)
        return ToolResult::failure("Error: Payment method not found");
    const Json& history = order->at("payment_history");
    if (history.size() != 1 || history[0].value("transaction_type", "") != "payment")
        return ToolResult::failure("Error: There should be exactly one payment for a pending order");
    const std::string old_method_id = history[0].value("payment_method_id", "");
    if (old_method_id == method_id)
        return ToolResult::failure("Error: The new payment method should be different from the current one");
    const double amount = history[0].value("amount", 0.0);
    if (is_gift_card(*method) && method->value("balance", 0.0) < amount)
        return ToolResult::failure("Error: Insufficient gift card balance to pay for the order");

    Json& db = ctx.write();
    Json& o = db["orders"][order_id];
    o["payment_history"].push_back(Json{{"transaction_type", "payment"}, {"amount", amount}, {"payment_method_id", method_id}});
    o["payment_history"].push_back(Json{{"transaction_type", "refund"}, {"amount", amount}, {"payment_method_id", old_method_id}});
    Json& methods = db["users"][o.value("user_id", "")]["payment_methods"];
    if (is_gift_card(methods[method_id]))
        methods[method_id]["balance"] = methods[method_id].value("balance", 0.0) - amount;
    if (methods.contains(old_method_id) && is_gift_card(methods[old_method_id]))
        methods[old_method_id]["balance"] = methods[old_method_id].value("balance", 0.0) + amount;
    return ToolResult::success(o);
}

ToolResult modify_user_address(const Json& args, ToolContext& ctx)
{
    const auto user_id = str_arg(args, "user_id");
    if (find_in(ctx.read(), "users", user_id) == nullptr)
        return ToolResult::failure("Error: User not found");
    Json& user = ctx.write()["users"][user_id];
    user["address"] = Json{
        {"address1", str_arg(args, "address1")}, {"address2", str_arg(args, "address2")}, {"city", str_arg(args, "city")},
        {"state", str_arg(args, "state")},       {"country", str_arg(args, "country")},   {"zip", str_arg(args, "zip")},
    };
    return ToolResult::success(user);
}

ToolResult return_delivered_order_items(const Json& args, ToolContext& ctx)
{
    const auto order_id = str_arg(args, "order_id");
    const Json* order = find_in(ctx.read(), "orders", order_id);
    if (order == nullptr)
        return ToolResult::failure("Error: Order not found");
    if (order->value("status", "") != "delivered")
        return ToolResult::failure("Error: Non-delivered order cannot be returned");
    const auto method_id = str_arg(args, "payment_method_id");
    const Json* method = user_payment_method(ctx.read(), *order, method_id);
    if (method == nullptr)
        return ToolResult::failure("Error: Payment method not found");
    const std::string original = order->at("payment_history").empty() ? "" : order->at("payment_history")[0].value("payment_method_id", "");
    if (method_id != original && !is_gift_card(*method))
        return ToolResult::failure("Error: Payment method should be either the original payment method or a gift card");

    auto item_ids = str_list_arg(args, "item_ids");
    if (item_ids.empty())
        return ToolResult::failure("Error: No items to return");
    std::vector<std::string> remaining;
    for (const auto& item: order->at("items"))
        remaining.push_back(item.value("item_id", ""));
    for (const auto& id: item_ids)
    {
        auto pos = std::find(remaining.begin(), remaining.end(), id);
        if (pos == remaining.end())
            return ToolResult::failure("Error: Some item not found");
        remaining.erase(pos);
    }
    std::sort(item_ids.begin(), item_ids.end());
    Json& o = ctx.write()["orders"][order_id];
    o["status"] = "return requested";
    o["return_items"] = item_ids;
    o["return_payment_method_id"] = method_id;
    return ToolResult::success(o);
}

ToolResult exchange_delivered_order_items(const Json& args, ToolContext& ctx)
{
    const auto order_id = str_arg(args, "order_id");
    const Json* order = find_in(ctx.read(), "orders", order_id);
    if (order == nullptr)
        return ToolResult::failure("Error: Order not found");
    if (order->value("status", "") != "delivered")
        return ToolResult::failure("Error: Non-delivered order cannot be exchanged");
    auto item_ids = str_list_arg(args, "item_ids");
    auto new_item_ids = str_list_arg(args, "new_item_ids");
    auto diff = item_swap_difference(ctx.read(), *order, item_ids, new_item_ids);
    if (auto* err = std::get_if<std::string>(&diff))
        return ToolResult::failure(*err);
    const double price_diff = std::get<double>(diff);
    const auto method_id = str_arg(args, "payment_method_id");
    const Json* method = user_payment_method(ctx.read(), *order, method_id);
    if (method == nullptr)
        return ToolResult::failure("Error: Payment method not found");
    if (is_gift_card(*method) && method->value("balance", 0.0) < price_diff)
        return ToolResult::failure("Error: Insufficient gift card balance to pay for the price difference");

    std::sort(item_ids.begin(), item_ids.end());
    std::sort(new_item_ids.begin(), new_item_ids.end());
    Json& o = ctx.write()["orders"][order_id];
    o["status"] = "exchange requested";
    o["exchange_items"] = item_ids;
    o["exchange_new_items"] = new_item_ids;
    o["exchange_payment_method_id"] = method_id;
    o["exchange_price_difference"] = price_diff;
    return ToolResult::success(o);
}

} // namespace

const std::map<std::string, ToolHandler, std::less<>>& retail_handlers()
{
    static const std::map<std::string, ToolHandler, std::less<>> handlers{
        {"retail.find_user_id_by_email", find_user_id_by_email},
        {"retail.find_user_id_by_name_zip", find_user_id_by_name_zip},
        {"retail.get_user_details", get_user_details},
        {"retail.get_order_details", get_order_details},
        {"retail.get_product_details", get_product_details},
        {"retail.list_all_product_types", list_all_product_types},
        {"retail.cancel_pending_order", cancel_pending_order},
        {"retail.modify_pending_order_items", modify_pending_order_items},
        {"retail.modify_pending_order_address", modify_pending_order_address},
        {"retail.modify_pending_order_payment", modify_pending_order_payment},
        {"retail.modify_user_address", modify_user_address},
        {"retail.return_delivered_order_items", return_delivered_order_items},
        {"retail.exchange_delivered_order_items", exchange_delivered_order_items},
    };
    return handlers;
}

} // namespace mtrl
